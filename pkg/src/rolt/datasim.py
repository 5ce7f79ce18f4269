"""Synthetic long-tailed datasets and class-prior-weighted label noise."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


class InvalidProfile(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ClassProfile:
    class_count: int
    base_count: int
    imbalance_ratio: float = 1.0


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray
    noise_level: float

    @property
    def class_count(self) -> int:
        return self.entries.shape[0]


@dataclass
class LabeledDataset:
    """Embedding matrix with assigned labels and (optionally) ground truth.

    Labels are 0-based class indices in memory; the on-disk format is 1-based.
    """

    embeddings: np.ndarray
    noisy_labels: np.ndarray
    class_count: int
    true_labels: Optional[np.ndarray] = None
    split_tag: str = "train"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float64)
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        if self.embeddings.ndim != 2:
            raise DimensionMismatch("embeddings must be a 2-D matrix")
        if self.noisy_labels.shape != (self.embeddings.shape[0],):
            raise DimensionMismatch("one label per embedding row required")
        if not np.all(np.isfinite(self.embeddings)):
            raise ValueError("embeddings contain non-finite values")
        if self.split_tag not in ("train", "test"):
            raise ValueError(f"unknown split_tag {self.split_tag!r}")
        _check_labels(self.noisy_labels, self.class_count)
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if self.true_labels.shape != self.noisy_labels.shape:
                raise DimensionMismatch("true_labels and noisy_labels differ in length")
            _check_labels(self.true_labels, self.class_count)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def class_counts(self) -> np.ndarray:
        """Per-class counts of the assigned labels."""
        return np.bincount(self.noisy_labels, minlength=self.class_count)

    def class_indices(self) -> list[np.ndarray]:
        """D_k: indices of examples currently labeled k, in ascending order."""
        return [np.flatnonzero(self.noisy_labels == k) for k in range(self.class_count)]

    def is_correct(self) -> np.ndarray:
        if self.true_labels is None:
            raise ValueError("dataset has no ground-truth labels")
        return self.noisy_labels == self.true_labels

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.embeddings.tobytes())
        h.update(self.noisy_labels.tobytes())
        return h.hexdigest()[:16]


def _check_labels(labels: np.ndarray, k: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")


def long_tailed_counts(profile: ClassProfile) -> list[int]:
    """Per-class sizes decaying exponentially from ``base_count`` to ``base_count / rho``."""
    k, base, rho = profile.class_count, profile.base_count, profile.imbalance_ratio
    if k < 2:
        raise InvalidProfile("need at least two classes")
    if rho < 1:
        raise InvalidProfile(f"imbalance ratio must be >= 1, got {rho}")
    if base < k:
        raise InvalidProfile(f"base_count {base} smaller than class count {k}")
    if np.floor(base / rho + 0.5) < 1:
        raise InvalidProfile(f"base_count {base} too small for imbalance ratio {rho}")
    counts = [int(np.floor(base * rho ** (-i / (k - 1)) + 0.5)) for i in range(k)]
    return [max(c, 1) for c in counts]


def build_transition_matrix(counts, gamma: float) -> TransitionMatrix:
    """Flip matrix with T[i, i] = 1 - gamma and off-diagonal mass proportional to N_j."""
    counts = np.asarray(counts, dtype=np.float64)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"noise level must be in [0, 1], got {gamma}")
    if counts.ndim != 1 or counts.size < 2:
        raise InvalidProfile("transition matrix needs at least two classes")
    if np.any(counts <= 0):
        raise InvalidProfile("class counts must be positive")
    total = counts.sum()
    entries = gamma * counts[None, :] / (total - counts)[:, None]
    np.fill_diagonal(entries, 1.0 - gamma)
    return TransitionMatrix(entries=entries, noise_level=float(gamma))


def inject_noise(dataset: LabeledDataset, transition: TransitionMatrix, seed) -> LabeledDataset:
    """Resample assigned labels from the rows of ``transition`` indexed by ground truth."""
    if dataset.true_labels is None:
        raise ValueError("noise injection requires ground-truth labels")
    if transition.class_count != dataset.class_count:
        raise DimensionMismatch(
            f"transition matrix is {transition.class_count}x{transition.class_count}, "
            f"dataset has {dataset.class_count} classes"
        )
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(transition.entries, axis=1)
    cdf[:, -1] = np.inf  # guard against row sums a hair below 1
    u = rng.random(dataset.size)
    rows = cdf[dataset.true_labels]
    noisy = (u[:, None] >= rows).sum(axis=1)
    return LabeledDataset(
        embeddings=dataset.embeddings,
        noisy_labels=noisy,
        class_count=dataset.class_count,
        true_labels=dataset.true_labels.copy(),
        split_tag=dataset.split_tag,
        meta={**dataset.meta, "noise_level": transition.noise_level, "noise_seed": _seed_repr(seed)},
    )


def blob_centers(class_count: int, dim: int, separation: float, seed) -> np.ndarray:
    """Random unit directions scaled by ``separation``; one row per class."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((class_count, dim))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    return separation * c


def generator_centers(class_count: int, dim: int, separation: float, seed) -> np.ndarray:
    """The class centers :func:`synth_blobs` draws for ``seed``."""
    center_seq = np.random.SeedSequence(_entropy(seed)).spawn(1)[0]
    return blob_centers(class_count, dim, separation, center_seq)


def synth_blobs(
    profile: ClassProfile,
    dim: int,
    separation: float,
    seed,
    noise_std: float = 1.0,
    test_per_class: int = 200,
    centers: Optional[np.ndarray] = None,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Isotropic Gaussian blobs: long-tailed train split, class-balanced test split.

    Both splits carry clean labels (``noisy_labels == true_labels``); apply
    :func:`inject_noise` to the train split to corrupt it.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if separation <= 0:
        raise ValueError("separation must be positive")
    counts = long_tailed_counts(profile)
    k = profile.class_count
    _, train_seq, test_seq = np.random.SeedSequence(_entropy(seed)).spawn(3)
    if centers is None:
        centers = generator_centers(k, dim, separation, seed)
    else:
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (k, dim):
            raise DimensionMismatch(f"centers must be {k}x{dim}")

    def draw(sizes, ss):
        rng = np.random.default_rng(ss)
        y = np.repeat(np.arange(k), sizes)
        x = centers[y] + noise_std * rng.standard_normal((y.size, dim))
        return x, y

    meta = {
        "profile": {
            "class_count": k,
            "base_count": profile.base_count,
            "imbalance_ratio": profile.imbalance_ratio,
        },
        "dim": dim,
        "separation": separation,
        "noise_std": noise_std,
        "seed": _seed_repr(seed),
        "counts": counts,
    }
    xtr, ytr = draw(counts, train_seq)
    xte, yte = draw([test_per_class] * k, test_seq)
    train = LabeledDataset(xtr, ytr.copy(), k, true_labels=ytr, split_tag="train", meta=dict(meta))
    test = LabeledDataset(xte, yte.copy(), k, true_labels=yte, split_tag="test", meta=dict(meta))
    return train, test


@dataclass(frozen=True)
class BenchmarkSpec:
    """The standard desk-scale benchmark used throughout the test-suite."""

    class_count: int = 10
    dim: int = 32
    base_count: int = 1000
    separation: float = 6.0
    noise_std: float = 1.0
    test_per_class: int = 200


def make_benchmark(
    rho: float, gamma: float, seed: int, spec: BenchmarkSpec = BenchmarkSpec()
) -> tuple[LabeledDataset, LabeledDataset]:
    """Long-tailed blobs with noise injected through the count-weighted flip matrix."""
    profile = ClassProfile(spec.class_count, spec.base_count, rho)
    train, test = synth_blobs(
        profile,
        spec.dim,
        spec.separation,
        seed,
        noise_std=spec.noise_std,
        test_per_class=spec.test_per_class,
    )
    transition = build_transition_matrix(train.meta["counts"], gamma)
    noise_seed = np.random.SeedSequence([_entropy(seed), 0x6E6F697365])
    return inject_noise(train, transition, noise_seed), test


def _entropy(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy
    return seed


def _seed_repr(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy) if isinstance(seed.entropy, int) else str(seed.entropy)
    return str(seed)
