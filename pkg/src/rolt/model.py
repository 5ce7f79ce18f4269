"""Linear softmax classifier trained with plain SGD."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SIMPLEX_TOL = 1e-9


class NotASimplex(ValueError):
    pass


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be KxD and bias length K")

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))


@dataclass(frozen=True)
class GradientEstimate:
    dW: np.ndarray
    db: np.ndarray
    batch_size: int


def init_model(class_count: int, dim: int, rng: np.random.Generator) -> LinearModel:
    """Fan-in uniform weights in [-1/sqrt(D), 1/sqrt(D)], zero bias."""
    bound = 1.0 / np.sqrt(dim)
    w = rng.uniform(-bound, bound, size=(class_count, dim))
    return LinearModel(w, np.zeros(class_count))


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def one_hot(labels, class_count: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.size, class_count))
    out[np.arange(labels.size), labels] = 1.0
    return out


def as_targets(targets, class_count: int) -> np.ndarray:
    """Hard integer labels become one-hot rows; soft rows are checked for the simplex."""
    t = np.asarray(targets)
    if t.ndim == 1 and np.issubdtype(t.dtype, np.integer):
        return one_hot(t, class_count)
    t = np.atleast_2d(t.astype(np.float64))
    if t.shape[-1] != class_count:
        raise ValueError(f"targets have {t.shape[-1]} columns, expected {class_count}")
    if np.any(t < -SIMPLEX_TOL) or np.any(np.abs(t.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise NotASimplex("target rows must be non-negative and sum to 1")
    return t


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row H(target, softmax(logits)) for already-validated targets."""
    return -(targets * log_softmax(logits)).sum(axis=-1)


def softmax_cross_entropy(logits, target) -> float:
    """H(target, softmax(logits)) for a single example.

    ``target`` is either an integer class or a length-K probability vector.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    if np.isscalar(target) or np.ndim(target) == 0:
        t = one_hot([int(target)], z.size)[0]
    else:
        t = as_targets(np.asarray(target, dtype=np.float64), z.size)[0]
    return float(max(cross_entropy(z, t), 0.0))


def loss_gradient(
    model: LinearModel,
    x: np.ndarray,
    targets,
    class_weights: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """Gradient of the (optionally class-weighted) mean cross-entropy over a batch.

    With ``class_weights`` each example's term is scaled by the weight of its
    target class (the expected weight under a soft target) before averaging
    over the batch.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a non-empty 2-D array")
    if x.shape[1] != model.dim:
        raise ValueError(f"batch has dim {x.shape[1]}, model expects {model.dim}")
    t = as_targets(targets, model.class_count)
    if t.shape[0] != x.shape[0]:
        raise ValueError("one target per example required")
    residual = softmax(model.logits(x)) - t
    if class_weights is not None:
        residual *= (t @ np.asarray(class_weights, dtype=np.float64))[:, None]
    n = x.shape[0]
    return GradientEstimate(residual.T @ x / n, residual.sum(axis=0) / n, n)


def mean_loss(
    model: LinearModel, x: np.ndarray, targets, class_weights: Optional[np.ndarray] = None
) -> float:
    t = as_targets(targets, model.class_count)
    per = cross_entropy(model.logits(x), t)
    if class_weights is not None:
        per = per * (t @ np.asarray(class_weights, dtype=np.float64))
    return float(per.mean())


def sgd_step(
    model: LinearModel, grad: GradientEstimate, lr: float, weight_decay: float = 0.0
) -> LinearModel:
    """One SGD update, w <- w - lr * (grad + weight_decay * w), on weights and bias."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    w = model.weights - lr * (grad.dW + weight_decay * model.weights)
    b = model.bias - lr * (grad.db + weight_decay * model.bias)
    return LinearModel(w, b)


def predict_erm(model: LinearModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Logits and argmax class; ties go to the smaller class index."""
    z = model.logits(np.asarray(x, dtype=np.float64))
    return z, np.argmax(z, axis=1)


def drw_class_weights(counts, beta: float = 0.9999) -> np.ndarray:
    """Inverse effective-number weights, normalised to mean 1."""
    counts = np.asarray(counts, dtype=np.float64)
    effective = (1.0 - np.power(beta, counts)) / (1.0 - beta)
    w = 1.0 / effective
    return w * counts.size / w.sum()
