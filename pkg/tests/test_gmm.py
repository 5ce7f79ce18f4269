import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rolt.datasim import make_benchmark
from rolt.evaluation import detection_scores, shot_split
from rolt.gmm import (
    CleanNoisySplit,
    GmmFit,
    check_partition,
    clean_mask,
    detect,
    fit_gmm2,
    split_class,
)
from rolt.trainer import TrainConfig, prototype_space


def sample_mixture(rng, n, phi, mu, sd):
    z = rng.random(n) < phi[0]
    return np.where(z, rng.normal(mu[0], sd[0], n), rng.normal(mu[1], sd[1], n))


def test_exact_bimodal_recovery():
    x = np.r_[np.full(500, 0.1), np.full(500, 5.0)]
    fit = fit_gmm2(x)
    np.testing.assert_allclose(fit.means, [0.1, 5.0], atol=1e-3)
    np.testing.assert_allclose(fit.weights, [0.5, 0.5], atol=1e-3)


def test_constant_input_is_degenerate():
    fit = fit_gmm2(np.full(50, 2.5))
    assert fit.degenerate and not fit.converged
    assert clean_mask(np.full(50, 2.5), fit).all()


def test_too_few_samples():
    fit = fit_gmm2([1.0])
    assert fit.degenerate
    assert clean_mask([1.0], fit).all()


def test_monte_carlo_recovery():
    rng = np.random.default_rng(0)
    x = sample_mixture(rng, 10_000, (0.7, 0.3), (1.0, 4.0), (0.2, 0.3))
    fit = fit_gmm2(x)
    np.testing.assert_allclose(fit.weights, [0.7, 0.3], atol=0.05)
    np.testing.assert_allclose(fit.means, [1.0, 4.0], atol=0.05)
    np.testing.assert_allclose(fit.stds, [0.2, 0.3], atol=0.05)
    assert fit.converged


def test_log_likelihood_monotone():
    rng = np.random.default_rng(3)
    x = sample_mixture(rng, 2000, (0.5, 0.5), (0.0, 1.0), (1.0, 1.0))
    h = np.array(fit_gmm2(x).history)
    assert np.all(np.diff(h) >= -1e-9 * np.abs(h[:-1]))


@given(x=arrays(np.float64, st.integers(5, 60), elements=st.floats(0, 100)), seed=st.integers(0, 10))
def test_fit_is_permutation_invariant(x, seed):
    a = fit_gmm2(x)
    b = fit_gmm2(np.random.default_rng(seed).permutation(x))
    assert a.to_dict() == b.to_dict()
    mask = clean_mask(x, a)
    assert mask.dtype == bool and mask.size == x.size
    if not a.degenerate:
        assert a.means[0] <= a.means[1]
        assert a.weights.sum() == pytest.approx(1.0)


def _fit(means, stds, weights=(0.5, 0.5)):
    return GmmFit(np.array(weights), np.array(means), np.array(stds), 0.0, 1, True)


def test_split_at_component_means():
    fit = _fit([1.0, 5.0], [0.5, 0.5])
    clean, noisy = split_class(np.array([10, 11]), np.array([1.0, 5.0]), fit)
    assert clean.tolist() == [10] and noisy.tolist() == [11]


def test_equal_variance_boundary_at_midpoint():
    fit = _fit([1.0, 5.0], [0.7, 0.7], weights=(0.9, 0.1))
    d = np.array([2.999, 3.0, 3.001])
    # weights are ignored; equal densities at 3.0 are not strictly greater so it is noisy
    assert clean_mask(d, fit).tolist() == [True, False, False]


def test_split_preserves_order():
    fit = _fit([1.0, 5.0], [0.5, 0.5])
    idx = np.array([7, 3, 9, 1])
    clean, noisy = split_class(idx, np.array([0.9, 6.0, 1.1, 5.5]), fit)
    assert clean.tolist() == [7, 9] and noisy.tolist() == [3, 1]


def test_single_class_dataset(rng):
    x = rng.standard_normal((30, 4))
    det = detect(x, np.zeros(30, int), 1)
    assert check_partition(det.split, np.zeros(30, int))


def test_small_classes_all_clean(rng):
    x = rng.standard_normal((24, 3))
    labels = np.r_[np.zeros(20, int), np.ones(4, int)]
    det = detect(x, labels, 2)
    assert len(det.split.noisy[1]) == 0 and det.fits[1].degenerate


def test_partition_and_worker_equivalence():
    train, _ = make_benchmark(100, 0.3, 1)
    z = prototype_space(train.embeddings, TrainConfig())
    a = detect(z, train.noisy_labels, 10)
    b = detect(z, train.noisy_labels, 10, workers=4)
    assert check_partition(a.split, train.noisy_labels)
    assert np.array_equal(a.split.is_clean(), b.split.is_clean())
    assert len(a.rounds) == 2


def test_detection_on_many_split():
    train, _ = make_benchmark(100, 0.3, 0)
    z = prototype_space(train.embeddings, TrainConfig())
    det = detect(z, train.noisy_labels, 10)
    shots = shot_split(np.bincount(train.true_labels, minlength=10))
    s = detection_scores(det.split.is_clean(), train.noisy_labels, train.true_labels, shots)["many"]
    assert s.precision >= 0.85 and s.recall >= 0.85


@pytest.mark.xfail(strict=True, reason="unweighted density rule splits unimodal distance samples; see ledger")
def test_clean_data_mostly_flagged_clean():
    train, _ = make_benchmark(10, 0.0, 0)
    z = prototype_space(train.embeddings, TrainConfig())
    det = detect(z, train.noisy_labels, 10)
    assert det.split.is_clean().mean() >= 0.95


def test_from_mask_round_trip():
    labels = np.array([0, 1, 0, 2, 1])
    flag = np.array([True, False, False, True, True])
    s = CleanNoisySplit.from_mask(flag, labels, 3)
    assert np.array_equal(s.is_clean(), flag)
    assert check_partition(s, labels)
    assert s.noisy_indices().tolist() == [1, 2]
