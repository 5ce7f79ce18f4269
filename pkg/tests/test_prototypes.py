import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rolt.datasim import ClassProfile, generator_centers, synth_blobs
from rolt.prototypes import (
    PrototypeSet,
    angle_between,
    compute_prototypes,
    distances_to_prototype,
    predict_ncm,
    squared_distances,
)


def test_single_example_prototype():
    x = np.array([[3.0, 4.0]])
    p = compute_prototypes(x, [np.array([0])])
    np.testing.assert_allclose(p.centers[0], [0.6, 0.8])
    assert not p.degenerate[0] and p.source_counts[0] == 1


def test_cancelling_pair_is_degenerate():
    x = np.array([[1.0, 2.0], [-1.0, -2.0], [0.0, 5.0]])
    p = compute_prototypes(x, [np.array([0, 1]), np.array([2])])
    assert p.degenerate.tolist() == [True, False]
    # falls back to the normalised global mean
    np.testing.assert_allclose(p.centers[0], [0.0, 1.0])


def test_degenerate_keeps_previous():
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    prev = PrototypeSet(np.array([[0.6, 0.8], [0.0, 1.0]]), np.array([1, 1]), np.zeros(2, bool))
    p = compute_prototypes(x, [np.array([], dtype=int), np.array([1])], previous=prev)
    np.testing.assert_array_equal(p.centers[0], [0.6, 0.8])
    assert p.degenerate[0] and p.source_counts[0] == 0


def test_zero_data_fallback_is_basis_vector():
    p = compute_prototypes(np.zeros((2, 3)), [np.array([0, 1])])
    np.testing.assert_array_equal(p.centers[0], [1.0, 0.0, 0.0])


def test_centers_align_with_generator():
    train, _ = synth_blobs(ClassProfile(5, 200, 10.0), 16, 10.0, seed=4)
    p = compute_prototypes(train.embeddings, train.class_indices())
    true = generator_centers(5, 16, 10.0, 4)
    assert np.all(angle_between(p.centers, true) < 5.0)


@given(
    x=arrays(np.float64, (7, 4), elements=st.floats(-10, 10)),
    labels=arrays(np.int64, 7, elements=st.integers(0, 2)),
)
def test_prototypes_are_unit_or_degenerate(x, labels):
    p = compute_prototypes(x, [np.flatnonzero(labels == k) for k in range(3)])
    norms = np.linalg.norm(p.centers, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_distance_zero_and_orthogonal():
    protos = PrototypeSet(np.eye(3), np.ones(3, int), np.zeros(3, bool))
    x = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    idx, d = distances_to_prototype(x, np.array([0, 0]), protos, 0)
    assert idx.tolist() == [0, 1]
    np.testing.assert_allclose(d, [0.0, 2.0], atol=1e-15)
    with pytest.raises(IndexError):
        distances_to_prototype(x, np.array([0, 0]), protos, 3)


def test_distances_match_double_loop(rng):
    x = rng.standard_normal((40, 6))
    c = rng.standard_normal((5, 6))
    want = np.array([[sum((x[i, j] - c[k, j]) ** 2 for j in range(6)) for k in range(5)] for i in range(40)])
    np.testing.assert_allclose(squared_distances(x, c), want, rtol=0, atol=1e-12)


def test_ncm_exact_prototype():
    protos = PrototypeSet(np.eye(4), np.ones(4, int), np.zeros(4, bool))
    _, pred = predict_ncm(protos, np.eye(4)[[2]])
    assert pred.tolist() == [2]


def test_ncm_tie_on_bisector():
    protos = PrototypeSet(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.ones(2, int), np.zeros(2, bool))
    scores, pred = predict_ncm(protos, np.array([[0.0, 3.0]]))
    assert scores[0, 0] == scores[0, 1] and pred.tolist() == [0]


def test_prototype_dict_round_trip(rng):
    p = compute_prototypes(rng.standard_normal((10, 3)), [np.arange(5), np.arange(5, 10)])
    q = PrototypeSet.from_dict(p.to_dict())
    assert np.array_equal(p.centers, q.centers) and np.array_equal(p.degenerate, q.degenerate)
