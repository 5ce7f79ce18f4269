"""Class prototypes, squared distances to them, and the nearest-class-mean classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class PrototypeSet:
    centers: np.ndarray  # (K, D), unit rows unless degenerate
    source_counts: np.ndarray  # (K,)
    degenerate: np.ndarray  # (K,) bool

    @property
    def class_count(self) -> int:
        return self.centers.shape[0]

    def to_dict(self) -> dict:
        return {
            "K": int(self.centers.shape[0]),
            "D": int(self.centers.shape[1]),
            "centers": self.centers.tolist(),
            "counts": [int(c) for c in self.source_counts],
            "degenerate": [bool(d) for d in self.degenerate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrototypeSet":
        centers = np.asarray(d["centers"], dtype=np.float64).reshape(d["K"], d["D"])
        return cls(
            centers,
            np.asarray(d["counts"], dtype=np.int64),
            np.asarray(d["degenerate"], dtype=bool),
        )


def _normalize(v: np.ndarray) -> Optional[np.ndarray]:
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n <= _ZERO_NORM:
        return None
    return v / n


def compute_prototypes(
    embeddings: np.ndarray,
    index_sets: Sequence[np.ndarray],
    previous: Optional[PrototypeSet] = None,
) -> PrototypeSet:
    """L2-normalised mean embedding of each index set.

    An empty or zero-mean set keeps its ``previous`` prototype when one is
    given; otherwise it falls back to the normalised mean of all examples.
    Either way the class is flagged degenerate.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    k = len(index_sets)
    centers = np.empty((k, x.shape[1]))
    counts = np.zeros(k, dtype=np.int64)
    degenerate = np.zeros(k, dtype=bool)
    fallback = None
    for c, idx in enumerate(index_sets):
        idx = np.asarray(idx, dtype=np.int64)
        counts[c] = idx.size
        center = _normalize(x[idx].mean(axis=0)) if idx.size else None
        if center is None:
            degenerate[c] = True
            if previous is not None:
                center = previous.centers[c]
            else:
                if fallback is None:
                    fallback = _normalize(x.mean(axis=0)) if x.shape[0] else None
                    if fallback is None:
                        fallback = np.eye(1, x.shape[1])[0]
                center = fallback
        centers[c] = center
    return PrototypeSet(centers, counts, degenerate)


def squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(N, K) matrix of ||c_k - x_i||^2, computed from explicit differences."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((x.shape[0], centers.shape[0]))
    for k, c in enumerate(centers):
        diff = x - c
        out[:, k] = np.einsum("ij,ij->i", diff, diff)
    return out


def distances_to_prototype(
    embeddings: np.ndarray, labels: np.ndarray, protos: PrototypeSet, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the examples labeled ``k`` and their squared distance to prototype ``k``."""
    if not 0 <= k < protos.class_count:
        raise IndexError(f"class {k} out of range")
    idx = np.flatnonzero(np.asarray(labels) == k)
    diff = np.asarray(embeddings, dtype=np.float64)[idx] - protos.centers[k]
    return idx, np.einsum("ij,ij->i", diff, diff)


def predict_ncm(protos: PrototypeSet, embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Negative squared distances to every prototype, and the nearest class.

    The scores double as NCM logits; ties go to the smaller class index.
    """
    scores = -squared_distances(embeddings, protos.centers)
    return scores, np.argmax(scores, axis=1)


def angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise angle in degrees."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    cos = (a * b).sum(axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
