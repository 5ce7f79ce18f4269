"""Warm-up then robust training: per-epoch detection, pseudo-labeling and SGD."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import evaluation as ev
from .datasim import LabeledDataset
from .gmm import CleanNoisySplit, DetectionResult, detect, flag_all_clean
from .model import (
    LinearModel,
    cross_entropy,
    drw_class_weights,
    init_model,
    loss_gradient,
    one_hot,
    predict_erm,
    sgd_step,
)
from .prototypes import PrototypeSet, compute_prototypes, predict_ncm
from .pseudolabel import GuessPriors, MomentumLogits, Targets, relabel_noisy, update_momentum

log = logging.getLogger(__name__)

METHODS = ("rolt", "erm")


@dataclass
class TrainConfig:
    method: str = "rolt"
    warmup_epochs: int = 80
    robust_epochs: int = 120
    batch_size: int = 128
    lr: float = 0.1
    # (epoch, multiplier) pairs, epochs counted from 0 over the whole run; None
    # anneals by 100x at 80% and again at 90% of the epochs
    lr_schedule: Optional[list] = None
    weight_decay: float = 2e-4
    alpha: float = 0.9
    priors: GuessPriors = field(default_factory=GuessPriors)
    drw_enabled: bool = False
    drw_start_fraction: float = 0.8
    drw_beta: float = 0.9999
    refinement_rounds: int = 1
    min_class_size: int = 5
    # prototypes, distances and NCM scores use L2-normalised embeddings
    normalize_embeddings: bool = True
    seed: int = 0
    workers: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.priors, dict):
            self.priors = GuessPriors(**self.priors)
        elif isinstance(self.priors, (list, tuple)):
            self.priors = GuessPriors(*self.priors)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.warmup_epochs < 0 or self.robust_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1 or self.lr <= 0:
            raise ValueError("batch_size and lr must be positive")
        if not 0.0 < self.drw_start_fraction <= 1.0:
            raise ValueError("drw_start_fraction must be in (0, 1]")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must be in [0, 1)")
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be non-negative")
        if self.lr_schedule is not None:
            self.lr_schedule = [(int(e), float(m)) for e, m in self.lr_schedule]

    @property
    def total_epochs(self) -> int:
        return self.warmup_epochs + self.robust_epochs

    @property
    def drw_start_epoch(self) -> int:
        return int(np.ceil(self.drw_start_fraction * self.total_epochs - 1e-9))

    def lr_at(self, epoch: int) -> float:
        schedule = self.lr_schedule
        if schedule is None:
            e = self.total_epochs
            schedule = [(int(round(0.8 * e)), 0.01), (int(round(0.9 * e)), 1e-4)]
        mult = 1.0
        for start, m in sorted(schedule):
            if epoch >= start:
                mult = m
        return self.lr * mult

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["priors"] = dataclasses.asdict(self.priors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    lr: float
    drw_active: bool
    loss: float  # (sum clean CE + sum noisy CE) / (|X| + |S|)
    loss_clean: float  # mean over X
    loss_noisy: float  # mean over S
    n_clean: int
    n_noisy: int
    det_precision: float = float("nan")
    det_recall: float = float("nan")
    erm_acc: float = float("nan")
    ncm_acc: float = float("nan")
    erm_recalls: list = field(default_factory=list)
    ncm_recalls: list = field(default_factory=list)


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    dataset_hash: str = ""
    counts: list = field(default_factory=list)

    def last(self) -> EpochRecord:
        return self.records[-1]

    def best_erm_acc(self) -> float:
        vals = [r.erm_acc for r in self.records if not np.isnan(r.erm_acc)]
        return max(vals) if vals else float("nan")


@dataclass
class TrainState:
    model: LinearModel
    prototypes: PrototypeSet
    erm_store: MomentumLogits
    ncm_store: MomentumLogits
    epoch: int = 0


@dataclass
class EpochOutput:
    """What the robust stage used for its gradients in one epoch."""

    split: CleanNoisySplit
    targets: Targets
    detection: Optional[DetectionResult] = None


@dataclass
class TrainResult:
    model: LinearModel
    prototypes: PrototypeSet
    report: TrainReport
    last_output: Optional[EpochOutput] = None
    state: Optional[TrainState] = None


def _sgd_epoch(model, x, targets, config, epoch, rng, class_weights):
    lr = config.lr_at(epoch)
    perm = rng.permutation(x.shape[0])
    for start in range(0, perm.size, config.batch_size):
        b = perm[start : start + config.batch_size]
        grad = loss_gradient(model, x[b], targets[b], class_weights)
        model = sgd_step(model, grad, lr, config.weight_decay)
    return model


def _class_weights(config: TrainConfig, counts, epoch: int):
    if config.drw_enabled and epoch >= config.drw_start_epoch:
        return drw_class_weights(counts, config.drw_beta)
    return None


def prototype_space(x: np.ndarray, config: TrainConfig) -> np.ndarray:
    """Embeddings as seen by prototypes, detection and the NCM classifier."""
    if not config.normalize_embeddings:
        return x
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def _label_prototypes(dataset: LabeledDataset, config: TrainConfig) -> PrototypeSet:
    return compute_prototypes(prototype_space(dataset.embeddings, config), dataset.class_indices())


def _losses(model, x, targets, is_clean):
    per = cross_entropy(model.logits(x), targets)
    n_clean = int(is_clean.sum())
    n_noisy = int((~is_clean).sum())
    return (
        float(per.sum() / per.size),
        float(per[is_clean].mean()) if n_clean else 0.0,
        float(per[~is_clean].mean()) if n_noisy else 0.0,
    )


def _evaluate(record: EpochRecord, model, protos, test: Optional[LabeledDataset], config):
    if test is None:
        return
    truth = test.true_labels if test.true_labels is not None else test.noisy_labels
    _, erm_pred = predict_erm(model, test.embeddings)
    _, ncm_pred = predict_ncm(protos, prototype_space(test.embeddings, config))
    record.erm_acc, erm_rec = ev.balanced_accuracy(erm_pred, truth, test.class_count)
    record.ncm_acc, ncm_rec = ev.balanced_accuracy(ncm_pred, truth, test.class_count)
    record.erm_recalls = erm_rec.tolist()
    record.ncm_recalls = ncm_rec.tolist()


def init_stores(dataset: LabeledDataset, model: LinearModel, protos: PrototypeSet, config: TrainConfig):
    n, k, alpha = dataset.size, dataset.class_count, config.alpha
    z = prototype_space(dataset.embeddings, config)
    erm = update_momentum(MomentumLogits.empty(n, k, alpha), model.logits(dataset.embeddings))
    ncm = update_momentum(MomentumLogits.empty(n, k, alpha), predict_ncm(protos, z)[0])
    return erm, ncm


def warmup(
    dataset: LabeledDataset,
    config: TrainConfig,
    rng: Optional[np.random.Generator] = None,
    test: Optional[LabeledDataset] = None,
    report: Optional[TrainReport] = None,
    epochs: Optional[int] = None,
) -> TrainState:
    """Plain cross-entropy SGD on the assigned labels; momentum stores seeded at the end."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    epochs = config.warmup_epochs if epochs is None else epochs
    x = dataset.embeddings
    targets = one_hot(dataset.noisy_labels, dataset.class_count)
    counts = dataset.class_counts()
    model = init_model(dataset.class_count, dataset.dim, rng)
    all_clean = np.ones(dataset.size, dtype=bool)
    protos = _label_prototypes(dataset, config)
    for epoch in range(epochs):
        weights = _class_weights(config, counts, epoch)
        model = _sgd_epoch(model, x, targets, config, epoch, rng, weights)
        if report is not None:
            loss, lc, _ = _losses(model, x, targets, all_clean)
            rec = EpochRecord(
                epoch, "warmup", config.lr_at(epoch), weights is not None, loss, lc, 0.0, dataset.size, 0
            )
            _evaluate(rec, model, protos, test, config)
            report.records.append(rec)
    erm, ncm = init_stores(dataset, model, protos, config)
    return TrainState(model, protos, erm, ncm, epochs)


def robust_epoch(
    state: TrainState,
    dataset: LabeledDataset,
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[TrainState, EpochOutput]:
    """One robust-stage epoch: detect, refresh momentum logits, relabel, one SGD pass."""
    x = dataset.embeddings
    z = prototype_space(x, config)
    labels = dataset.noisy_labels
    k = dataset.class_count
    protos = _label_prototypes(dataset, config)
    det = detect(
        z,
        labels,
        k,
        protos=protos,
        refinement_rounds=config.refinement_rounds,
        min_class_size=config.min_class_size,
        workers=config.workers,
    )
    erm_store = update_momentum(state.erm_store, state.model.logits(x))
    ncm_store = update_momentum(state.ncm_store, predict_ncm(det.prototypes, z)[0])
    is_clean = det.split.is_clean()
    targets = relabel_noisy(is_clean, erm_store, ncm_store, config.priors, labels, k)
    weights = _class_weights(config, dataset.class_counts(), state.epoch)
    model = _sgd_epoch(state.model, x, targets.targets, config, state.epoch, rng, weights)
    new_state = TrainState(model, det.prototypes, erm_store, ncm_store, state.epoch + 1)
    return new_state, EpochOutput(det.split, targets, det)


def train(
    dataset: LabeledDataset, config: TrainConfig, test: Optional[LabeledDataset] = None
) -> TrainResult:
    """Warm-up followed by ``robust_epochs`` robust epochs (or plain ERM throughout)."""
    rng = np.random.default_rng(config.seed)
    report = TrainReport(dataset_hash=dataset.fingerprint(), counts=dataset.class_counts().tolist())
    warm = config.total_epochs if config.method == "erm" else config.warmup_epochs
    state = warmup(dataset, config, rng, test, report, epochs=warm)
    if config.method == "erm":
        split = flag_all_clean(dataset.noisy_labels, dataset.class_count)
        targets = Targets(
            one_hot(dataset.noisy_labels, dataset.class_count),
            np.argmax(state.erm_store.q, axis=1),
            np.argmax(state.ncm_store.q, axis=1),
            np.ones(dataset.size, dtype=bool),
            np.zeros(dataset.size, dtype=bool),
        )
        return TrainResult(state.model, state.prototypes, report, EpochOutput(split, targets), state)

    output = None
    correct = dataset.is_correct() if dataset.true_labels is not None else None
    for _ in range(config.robust_epochs):
        epoch = state.epoch
        state, output = robust_epoch(state, dataset, config, rng)
        is_clean = output.targets.is_clean
        loss, lc, ln = _losses(state.model, dataset.embeddings, output.targets.targets, is_clean)
        rec = EpochRecord(
            epoch,
            "robust",
            config.lr_at(epoch),
            _class_weights(config, dataset.class_counts(), epoch) is not None,
            loss,
            lc,
            ln,
            int(is_clean.sum()),
            int((~is_clean).sum()),
        )
        if correct is not None:
            score = ev.detection_scores(is_clean, dataset.noisy_labels, dataset.true_labels)["overall"]
            rec.det_precision, rec.det_recall = score.precision, score.recall
        _evaluate(rec, state.model, state.prototypes, test, config)
        report.records.append(rec)
        log.debug("epoch %d loss %.4f |X| %d |S| %d", epoch, loss, rec.n_clean, rec.n_noisy)
    return TrainResult(state.model, state.prototypes, report, output, state)
