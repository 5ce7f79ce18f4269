"""Metrics and baselines: balanced accuracy, shot splits, detection scores, small-loss detector."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gmm import CleanNoisySplit, fit_gmm2, clean_mask, GmmFit


def confusion_matrix(predictions, true_labels, class_count: int) -> np.ndarray:
    """Counts with rows indexed by true class and columns by predicted class."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def per_class_recall(predictions, true_labels, class_count: int) -> np.ndarray:
    """Recall per class; NaN for classes with no test examples."""
    cm = confusion_matrix(predictions, true_labels, class_count)
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)


def balanced_accuracy(predictions, true_labels, class_count: int) -> tuple[float, np.ndarray]:
    """Mean per-class recall over classes present in ``true_labels``, plus the recalls."""
    recalls = per_class_recall(predictions, true_labels, class_count)
    missing = np.flatnonzero(np.isnan(recalls))
    if missing.size:
        warnings.warn(f"classes {missing.tolist()} absent from evaluation set; excluded")
    return float(np.nanmean(recalls)), recalls


def accuracy(predictions, true_labels) -> float:
    return float(np.mean(np.asarray(predictions) == np.asarray(true_labels)))


@dataclass(frozen=True)
class ShotSplit:
    many: tuple
    medium: tuple
    few: tuple
    thresholds: Optional[tuple] = None  # (many_above, few_below); None for explicit lists

    def buckets(self) -> dict:
        return {"many": self.many, "medium": self.medium, "few": self.few}


def shot_split(
    counts: Sequence[int],
    many_above: int = 100,
    few_below: int = 20,
    explicit: Optional[tuple] = None,
) -> ShotSplit:
    """Bucket classes by training count: many (> many_above), few (< few_below), medium otherwise.

    ``explicit`` = (many, medium, few) index lists bypasses the thresholds.
    """
    k = len(counts)
    if explicit is not None:
        many, medium, few = (tuple(int(c) for c in grp) for grp in explicit)
        seen = sorted(many + medium + few)
        if seen != list(range(k)):
            raise ValueError("explicit shot lists must partition the classes")
        return ShotSplit(many, medium, few, None)
    counts = np.asarray(counts)
    many = tuple(int(c) for c in np.flatnonzero(counts > many_above))
    few = tuple(int(c) for c in np.flatnonzero(counts < few_below))
    medium = tuple(int(c) for c in np.flatnonzero((counts <= many_above) & (counts >= few_below)))
    return ShotSplit(many, medium, few, (many_above, few_below))


def bucket_mean(values: np.ndarray, classes: Sequence[int]) -> float:
    if len(classes) == 0:
        return float("nan")
    return float(np.nanmean(np.asarray(values)[list(classes)]))


@dataclass(frozen=True)
class DetectionScore:
    precision: float
    recall: float
    selected: int  # |X|
    true_positive: int  # clean examples inside X
    clean_total: int  # examples whose assigned label is correct
    empty_selection: bool = False
    noisy_precision: float = float("nan")  # fraction of S that is really mislabeled
    noisy_recall: float = float("nan")


def _score(is_clean_flag: np.ndarray, correct: np.ndarray) -> DetectionScore:
    selected = int(is_clean_flag.sum())
    tp = int((is_clean_flag & correct).sum())
    clean_total = int(correct.sum())
    flagged_noisy = ~is_clean_flag
    wrong = ~correct
    n_noisy = int(flagged_noisy.sum())
    tn = int((flagged_noisy & wrong).sum())
    return DetectionScore(
        precision=tp / selected if selected else 0.0,
        recall=tp / clean_total if clean_total else 0.0,
        selected=selected,
        true_positive=tp,
        clean_total=clean_total,
        empty_selection=selected == 0,
        noisy_precision=tn / n_noisy if n_noisy else float("nan"),
        noisy_recall=tn / int(wrong.sum()) if wrong.any() else float("nan"),
    )


def detection_scores(
    is_clean_flag: np.ndarray,
    noisy_labels: np.ndarray,
    true_labels: Optional[np.ndarray],
    shots: Optional[ShotSplit] = None,
) -> dict:
    """Precision/recall of the selected clean set, overall and per shot bucket.

    Buckets restrict to examples whose assigned label falls in the bucket.
    """
    if true_labels is None:
        raise ValueError("detection scores need ground-truth labels")
    flag = np.asarray(is_clean_flag, dtype=bool)
    noisy_labels = np.asarray(noisy_labels)
    correct = noisy_labels == np.asarray(true_labels)
    out = {"overall": _score(flag, correct)}
    if shots is not None:
        for name, classes in shots.buckets().items():
            m = np.isin(noisy_labels, classes)
            out[name] = _score(flag[m], correct[m])
    return out


def per_class_detection(
    is_clean_flag: np.ndarray, noisy_labels: np.ndarray, true_labels: np.ndarray, class_count: int
) -> list:
    flag = np.asarray(is_clean_flag, dtype=bool)
    correct = np.asarray(noisy_labels) == np.asarray(true_labels)
    return [_score(flag[noisy_labels == k], correct[noisy_labels == k]) for k in range(class_count)]


@dataclass
class SmallLossResult:
    split: CleanNoisySplit
    fits: list = field(default_factory=list)


def small_loss_baseline(
    losses: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    mode: str = "global",
    min_class_size: int = 5,
) -> SmallLossResult:
    """Loss-based clean selection: two-component fit on per-example losses.

    ``mode="global"`` fits one mixture over all examples;
    ``mode="per_class"`` fits one per assigned class. The low-mean component is
    clean, with the same decision rule as the prototypical detector.
    """
    losses = np.asarray(losses, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite")
    flag = np.ones(losses.size, dtype=bool)
    fits: list[GmmFit] = []
    if mode == "global":
        fit = fit_gmm2(losses) if losses.size >= min_class_size else GmmFit.single(losses)
        flag = clean_mask(losses, fit)
        fits.append(fit)
    elif mode == "per_class":
        for k in range(class_count):
            idx = np.flatnonzero(labels == k)
            fit = fit_gmm2(losses[idx]) if idx.size >= min_class_size else GmmFit.single(losses[idx])
            flag[idx] = clean_mask(losses[idx], fit)
            fits.append(fit)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return SmallLossResult(CleanNoisySplit.from_mask(flag, labels, class_count), fits)


def recall_std(recalls: np.ndarray) -> float:
    """Spread of per-class recall; lower means more balanced predictions."""
    return float(np.nanstd(recalls))
