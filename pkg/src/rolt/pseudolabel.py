"""Soft pseudo-labels from guessed labels, and momentum (temporally ensembled) logits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .model import one_hot


@dataclass(frozen=True)
class GuessPriors:
    """Prior probability that each guess matches the ground truth."""

    erm: float = 0.4
    ncm: float = 0.2
    orig: float = 0.2

    def __post_init__(self):
        vals = (self.erm, self.ncm, self.orig)
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("priors must lie in [0, 1]")
        if sum(vals) > 1.0 + 1e-12:
            raise ValueError(f"priors sum to {sum(vals)} > 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.erm, self.ncm, self.orig])


@dataclass(frozen=True)
class MomentumLogits:
    q: np.ndarray  # (N, K)
    alpha: float
    initialized: np.ndarray  # (N,) bool

    @classmethod
    def empty(cls, n: int, class_count: int, alpha: float = 0.9) -> "MomentumLogits":
        if not 0.0 <= alpha < 1.0:
            raise ValueError("alpha must be in [0, 1)")
        return cls(np.zeros((n, class_count)), alpha, np.zeros(n, dtype=bool))


def update_momentum(
    store: MomentumLogits, z: np.ndarray, indices: Optional[np.ndarray] = None
) -> MomentumLogits:
    """q <- alpha * q + (1 - alpha) * z; an example's first update copies z."""
    z = np.asarray(z, dtype=np.float64)
    if indices is None:
        indices = np.arange(store.q.shape[0])
    if z.shape != (len(indices), store.q.shape[1]):
        raise ValueError(f"logits shape {z.shape} does not match store")
    q = store.q.copy()
    init = store.initialized.copy()
    seen = init[indices]
    q[indices] = np.where(seen[:, None], store.alpha * q[indices] + (1.0 - store.alpha) * z, z)
    init[indices] = True
    return MomentumLogits(q, store.alpha, init)


class Guesses(NamedTuple):
    erm: int
    ncm: int
    orig: int

    @property
    def distinct(self) -> frozenset:
        return frozenset(self)

    def masses(self, priors: GuessPriors) -> dict:
        out: dict = {}
        for cls, p in zip(self, priors.as_array()):
            out[cls] = out.get(cls, 0.0) + float(p)
        return out


def guess_labels(erm_q_row, ncm_q_row, label: int) -> Guesses:
    """ERM and NCM guesses are the argmax of the momentum logits (softmax is monotone)."""
    return Guesses(int(np.argmax(erm_q_row)), int(np.argmax(ncm_q_row)), int(label))


def soft_labels(
    erm: np.ndarray, ncm: np.ndarray, orig: np.ndarray, priors: GuessPriors, class_count: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised soft labels for N guess triples.

    Guessed classes receive the summed prior mass of the guesses that hit
    them; the leftover mass is spread evenly over the non-guessed classes.
    When every class is guessed the guessed masses are renormalised instead,
    and the row is flagged in the returned boolean mask.
    """
    k = class_count
    guesses = np.stack([np.asarray(erm), np.asarray(ncm), np.asarray(orig)], axis=1).astype(np.int64)
    n = guesses.shape[0]
    p = priors.as_array()
    mass = np.zeros((n, k))
    rows = np.arange(n)
    for j in range(3):
        np.add.at(mass, (rows, guesses[:, j]), p[j])
    guessed = np.zeros((n, k), dtype=bool)
    for j in range(3):
        guessed[rows, guesses[:, j]] = True
    n_guessed = guessed.sum(axis=1)
    leftover = 1.0 - p.sum()
    degenerate = n_guessed >= k
    spread = np.where(degenerate, 0.0, leftover / np.maximum(k - n_guessed, 1))
    out = np.where(guessed, mass, spread[:, None])
    if degenerate.any():
        totals = mass[degenerate].sum(axis=1, keepdims=True)
        fixed = np.where(totals > 0, mass[degenerate] / np.where(totals > 0, totals, 1.0), 1.0 / k)
        out[degenerate] = fixed
    return out, degenerate


def soft_label(guesses: Guesses, priors: GuessPriors, class_count: int) -> np.ndarray:
    out, _ = soft_labels(
        np.array([guesses.erm]), np.array([guesses.ncm]), np.array([guesses.orig]), priors, class_count
    )
    return out[0]


@dataclass
class Targets:
    targets: np.ndarray  # (N, K)
    erm_guess: np.ndarray
    ncm_guess: np.ndarray
    is_clean: np.ndarray
    degenerate: np.ndarray  # rows whose smoothing mass had nowhere to go


def relabel_noisy(
    is_clean: np.ndarray,
    erm_store: MomentumLogits,
    ncm_store: MomentumLogits,
    priors: GuessPriors,
    labels: np.ndarray,
    class_count: int,
) -> Targets:
    """One-hot original labels for clean examples, soft pseudo-labels for noisy ones."""
    labels = np.asarray(labels, dtype=np.int64)
    is_clean = np.asarray(is_clean, dtype=bool)
    erm_guess = np.argmax(erm_store.q, axis=1)
    ncm_guess = np.argmax(ncm_store.q, axis=1)
    targets = one_hot(labels, class_count)
    degenerate = np.zeros(labels.size, dtype=bool)
    noisy = np.flatnonzero(~is_clean)
    if noisy.size:
        soft, deg = soft_labels(erm_guess[noisy], ncm_guess[noisy], labels[noisy], priors, class_count)
        targets[noisy] = soft
        degenerate[noisy] = deg
    return Targets(targets, erm_guess, ncm_guess, is_clean, degenerate)
