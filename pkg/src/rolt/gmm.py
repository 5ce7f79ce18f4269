"""Two-component 1-D Gaussian mixtures over prototype distances, and the clean/noisy split."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .prototypes import PrototypeSet, compute_prototypes

LOG_2PI = np.log(2.0 * np.pi)
MIN_CLASS_SIZE = 5


@dataclass(frozen=True)
class GmmFit:
    weights: np.ndarray  # (2,), sums to 1
    means: np.ndarray  # (2,), ascending
    stds: np.ndarray  # (2,)
    log_likelihood: float
    iterations: int
    converged: bool
    degenerate: bool = False
    history: tuple = ()

    @classmethod
    def single(cls, x: np.ndarray) -> "GmmFit":
        """One-component stand-in used when a two-component fit is meaningless."""
        x = np.asarray(x, dtype=np.float64)
        mu = float(x.mean()) if x.size else 0.0
        sd = float(x.std()) if x.size else 0.0
        return cls(
            weights=np.array([1.0, 0.0]),
            means=np.array([mu, mu]),
            stds=np.array([sd, sd]),
            log_likelihood=float("nan"),
            iterations=0,
            converged=False,
            degenerate=True,
        )

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "log_likelihood": None if np.isnan(self.log_likelihood) else self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate": self.degenerate,
        }


def normal_logpdf(x, mean, std):
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * LOG_2PI - np.log(std) - 0.5 * ((x - mean) / std) ** 2


def fit_gmm2(distances, tol: float = 1e-6, max_iter: int = 100) -> GmmFit:
    """EM for a two-component 1-D Gaussian mixture.

    Initialised at the 10th/90th percentiles with a shared sample std and equal
    weights, so the result depends only on the multiset of inputs.
    """
    x = np.sort(np.asarray(distances, dtype=np.float64).ravel())
    if x.size < 2:
        return GmmFit.single(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("distances must be finite")
    sample_std = float(x.std())
    scale = max(abs(float(x.mean())), 1.0)
    if sample_std <= 1e-12 * scale:
        return GmmFit.single(x)
    floor = 1e-4 * (sample_std + 1e-12)

    means = np.quantile(x, [0.1, 0.9])
    stds = np.full(2, max(sample_std, floor))
    weights = np.full(2, 0.5)
    n = x.size
    history = []
    converged = False
    it = 0

    def e_step(weights, means, stds):
        a = np.log(weights[0]) - np.log(stds[0]) - 0.5 * ((x - means[0]) / stds[0]) ** 2
        b = np.log(weights[1]) - np.log(stds[1]) - 0.5 * ((x - means[1]) / stds[1]) ** 2
        m = np.maximum(a, b)
        ea, eb = np.exp(a - m), np.exp(b - m)
        tot = ea + eb
        r1 = ea / tot
        ll = float(np.sum(m + np.log(tot))) - 0.5 * LOG_2PI * n
        return r1, ll

    r1, ll = e_step(weights, means, stds)
    history.append(ll)
    while it < max_iter:
        r2 = 1.0 - r1
        nk = np.array([r1.sum(), r2.sum()])
        if np.any(nk <= 1e-10 * n):
            break  # a component has emptied out; keep the last valid parameters
        weights = nk / n
        means = np.array([r1 @ x, r2 @ x]) / nk
        d1, d2 = x - means[0], x - means[1]
        var = np.array([r1 @ (d1 * d1), r2 @ (d2 * d2)]) / nk
        stds = np.maximum(np.sqrt(var), floor)
        it += 1
        r1, new_ll = e_step(weights, means, stds)
        history.append(new_ll)
        if new_ll - ll < tol:
            ll = new_ll
            converged = True
            break
        ll = new_ll

    order = np.argsort(means, kind="stable")
    weights = weights[order]
    weights = np.array([weights[0], 1.0 - weights[0]])
    return GmmFit(
        weights=weights,
        means=means[order],
        stds=stds[order],
        log_likelihood=ll,
        iterations=it,
        converged=converged,
        history=tuple(history),
    )


def component_log_densities(distances, fit: GmmFit) -> np.ndarray:
    """(n, 2) unweighted log N(d | mu_j, sigma_j); NaN for degenerate fits."""
    d = np.asarray(distances, dtype=np.float64)
    if fit.degenerate:
        return np.full((d.size, 2), np.nan)
    return np.stack([normal_logpdf(d, fit.means[j], fit.stds[j]) for j in range(2)], axis=1)


def clean_mask(distances, fit: GmmFit) -> np.ndarray:
    """Clean iff the low-mean component density strictly exceeds the high-mean one."""
    d = np.asarray(distances, dtype=np.float64)
    if fit.degenerate:
        return np.ones(d.size, dtype=bool)
    logp = component_log_densities(d, fit)
    return logp[:, 0] > logp[:, 1]


def split_class(indices, distances, fit: GmmFit) -> tuple[np.ndarray, np.ndarray]:
    """Partition ``indices`` into (clean, noisy), preserving input order."""
    indices = np.asarray(indices, dtype=np.int64)
    mask = clean_mask(distances, fit)
    return indices[mask], indices[~mask]


@dataclass
class CleanNoisySplit:
    clean: list  # per-class index arrays X_k
    noisy: list  # per-class index arrays S_k
    size: int

    @property
    def class_count(self) -> int:
        return len(self.clean)

    def clean_indices(self) -> np.ndarray:
        return np.sort(np.concatenate(self.clean)) if self.clean else np.zeros(0, np.int64)

    def noisy_indices(self) -> np.ndarray:
        return np.sort(np.concatenate(self.noisy)) if self.noisy else np.zeros(0, np.int64)

    def is_clean(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[self.clean_indices()] = True
        return mask

    @classmethod
    def from_mask(cls, is_clean: np.ndarray, labels: np.ndarray, class_count: int) -> "CleanNoisySplit":
        clean, noisy = [], []
        for k in range(class_count):
            idx = np.flatnonzero(labels == k)
            clean.append(idx[is_clean[idx]])
            noisy.append(idx[~is_clean[idx]])
        return cls(clean, noisy, int(labels.size))


@dataclass
class DetectionResult:
    split: CleanNoisySplit
    prototypes: PrototypeSet  # refined, from the clean sets
    fits: list
    distances: np.ndarray  # (N,) distance of each example to its own-label prototype
    log_densities: np.ndarray  # (N, 2)
    rounds: list = field(default_factory=list)  # the split emitted by every round


def _detect_class(x, idx, center, min_class_size):
    diff = x[idx] - center
    d = np.einsum("ij,ij->i", diff, diff)
    fit = GmmFit.single(d) if idx.size < min_class_size else fit_gmm2(d)
    clean, noisy = split_class(idx, d, fit)
    return d, fit, clean, noisy


def _split_all(x, class_sets, protos, min_class_size, workers):
    k = len(class_sets)
    args = [(x, class_sets[c], protos.centers[c], min_class_size) for c in range(k)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _detect_class(*a), args))
    else:
        results = [_detect_class(*a) for a in args]
    return results


def detect(
    embeddings: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    protos: Optional[PrototypeSet] = None,
    refinement_rounds: int = 1,
    min_class_size: int = MIN_CLASS_SIZE,
    workers: Optional[int] = None,
) -> DetectionResult:
    """Class-independent prototypical noise detection.

    Prototypes (computed from each D_k unless given) yield per-class distances,
    a two-component fit and a split; prototypes are then recomputed from the
    clean sets and the split redone ``refinement_rounds`` times.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    class_sets = [np.flatnonzero(labels == c) for c in range(class_count)]
    if protos is None:
        protos = compute_prototypes(x, class_sets)

    rounds = []
    for r in range(refinement_rounds + 1):
        if r > 0:
            protos = compute_prototypes(x, clean_sets, previous=protos)
        results = _split_all(x, class_sets, protos, min_class_size, workers)
        clean_sets = [res[2] for res in results]
        noisy_sets = [res[3] for res in results]
        rounds.append(CleanNoisySplit(clean_sets, noisy_sets, labels.size))

    distances = np.zeros(labels.size)
    log_dens = np.full((labels.size, 2), np.nan)
    fits = []
    for c, (d, fit, _, _) in enumerate(results):
        distances[class_sets[c]] = d
        log_dens[class_sets[c]] = component_log_densities(d, fit)
        fits.append(fit)
    # the returned prototypes come from the final clean sets, for the NCM classifier
    final_protos = compute_prototypes(x, clean_sets, previous=protos)
    return DetectionResult(rounds[-1], final_protos, fits, distances, log_dens, rounds)


def flag_all_clean(labels: np.ndarray, class_count: int) -> CleanNoisySplit:
    return CleanNoisySplit.from_mask(np.ones(len(labels), dtype=bool), np.asarray(labels), class_count)


def check_partition(split: CleanNoisySplit, labels: Sequence[int]) -> bool:
    labels = np.asarray(labels)
    for k in range(split.class_count):
        dk = np.flatnonzero(labels == k)
        x, s = np.asarray(split.clean[k]), np.asarray(split.noisy[k])
        if np.intersect1d(x, s).size or not np.array_equal(np.sort(np.concatenate([x, s])), dk):
            return False
    return True
