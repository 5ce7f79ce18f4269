"""Paired benchmark runs and grid sweeps."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import evaluation as ev
from .datasim import BenchmarkSpec, LabeledDataset, make_benchmark
from .model import cross_entropy, one_hot, predict_erm
from .prototypes import predict_ncm
from .trainer import TrainConfig, TrainResult, prototype_space, train

log = logging.getLogger(__name__)

METHODS = {
    "erm": {"method": "erm"},
    "erm-drw": {"method": "erm", "drw_enabled": True},
    "rolt": {"method": "rolt"},
    "rolt-drw": {"method": "rolt", "drw_enabled": True},
}


def method_config(method: str, seed: int, overrides: Optional[dict] = None) -> TrainConfig:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    d = dict(overrides or {})
    d.update(METHODS[method])
    d["seed"] = seed
    return TrainConfig.from_dict(d)


def summarize(result: TrainResult, train_ds: LabeledDataset, test: LabeledDataset, config: TrainConfig) -> dict:
    """Final-epoch metrics for one run, as a flat JSON-friendly dict."""
    k = test.class_count
    truth = test.true_labels if test.true_labels is not None else test.noisy_labels
    _, erm_pred = predict_erm(result.model, test.embeddings)
    _, ncm_pred = predict_ncm(result.prototypes, prototype_space(test.embeddings, config))
    erm_acc, erm_rec = ev.balanced_accuracy(erm_pred, truth, k)
    ncm_acc, ncm_rec = ev.balanced_accuracy(ncm_pred, truth, k)
    counts = train_ds.class_counts() if train_ds.true_labels is None else np.bincount(train_ds.true_labels, minlength=k)
    shots = ev.shot_split(counts)
    out = {
        "dataset_hash": train_ds.fingerprint(),
        "counts": counts.tolist(),
        "erm_acc": erm_acc,
        "ncm_acc": ncm_acc,
        "best_erm_acc": result.report.best_erm_acc(),
        "erm_recalls": erm_rec.tolist(),
        "ncm_recalls": ncm_rec.tolist(),
        "erm_recall_std": ev.recall_std(erm_rec),
        "ncm_recall_std": ev.recall_std(ncm_rec),
        "shots": {name: list(c) for name, c in shots.buckets().items()},
    }
    for name, classes in shots.buckets().items():
        out[f"erm_{name}"] = ev.bucket_mean(erm_rec, classes)
        out[f"ncm_{name}"] = ev.bucket_mean(ncm_rec, classes)
    if train_ds.true_labels is not None and result.last_output is not None:
        flag = result.last_output.split.is_clean()
        scores = ev.detection_scores(flag, train_ds.noisy_labels, train_ds.true_labels, shots)
        for name, s in scores.items():
            out[f"det_{name}_precision"] = s.precision
            out[f"det_{name}_recall"] = s.recall
        per_class = ev.per_class_detection(flag, train_ds.noisy_labels, train_ds.true_labels, k)
        out["det_class_precision"] = [s.precision for s in per_class]
        out["det_class_recall"] = [s.recall for s in per_class]
    return out


@dataclass
class CellResult:
    rho: float
    gamma: float
    seed: int
    method: str
    metrics: dict
    result: Optional[TrainResult] = field(default=None, repr=False)

    def row(self) -> dict:
        return {"rho": self.rho, "gamma": self.gamma, "seed": self.seed, "method": self.method, **self.metrics}


def run_cell(
    rho: float,
    gamma: float,
    seed: int,
    method: str,
    overrides: Optional[dict] = None,
    spec: BenchmarkSpec = BenchmarkSpec(),
    data: Optional[tuple] = None,
) -> CellResult:
    train_ds, test = data if data is not None else make_benchmark(rho, gamma, seed, spec)
    config = method_config(method, seed, overrides)
    result = train(train_ds, config, test)
    metrics = summarize(result, train_ds, test, config)
    log.info("rho=%g gamma=%g seed=%d %s: erm %.4f ncm %.4f", rho, gamma, seed, method, metrics["erm_acc"], metrics["ncm_acc"])
    return CellResult(rho, gamma, seed, method, metrics, result)


def small_loss_comparison(
    train_ds: LabeledDataset, erm_result: TrainResult, mode: str = "global"
) -> ev.SmallLossResult:
    """Small-loss selection from a plain-ERM model's per-example losses on the assigned labels."""
    losses = cross_entropy(
        erm_result.model.logits(train_ds.embeddings), one_hot(train_ds.noisy_labels, train_ds.class_count)
    )
    return ev.small_loss_baseline(losses, train_ds.noisy_labels, train_ds.class_count, mode)


@dataclass
class Grid:
    rho: list
    gamma: list
    methods: list
    seeds: list
    config: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        known = {"rho", "gamma", "methods", "seeds", "config", "benchmark"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return cls(
            rho=list(d.get("rho", [10, 100])),
            gamma=list(d.get("gamma", [0.2, 0.5])),
            methods=list(d.get("methods", ["erm", "rolt"])),
            seeds=list(d.get("seeds", [0, 1, 2])),
            config=dict(d.get("config", {})),
            benchmark=dict(d.get("benchmark", {})),
        )

    def cells(self):
        return itertools.product(self.rho, self.gamma, self.seeds, self.methods)


def run_grid(grid: Grid):
    spec = BenchmarkSpec(**grid.benchmark)
    cache: dict = {}
    for rho, gamma, seed, method in grid.cells():
        key = (rho, gamma, seed)
        if key not in cache:
            cache.clear()
            cache[key] = make_benchmark(rho, gamma, seed, spec)
        yield run_cell(rho, gamma, seed, method, grid.config, spec, data=cache[key])


def accuracy_table(rows: list) -> list:
    """Seed-averaged final accuracy (percent) per method and (rho, gamma) cell."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r["method"], r["rho"], r["gamma"]), []).append(r)
    out = []
    for (method, rho, gamma), rs in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0])):
        out.append(
            {
                "method": method,
                "rho": rho,
                "gamma": gamma,
                "seeds": len(rs),
                "erm_acc": 100 * float(np.mean([r["erm_acc"] for r in rs])),
                "ncm_acc": 100 * float(np.mean([r["ncm_acc"] for r in rs])),
                "best_erm_acc": 100 * float(np.mean([r["best_erm_acc"] for r in rs])),
                "erm_few": 100 * float(np.nanmean([r["erm_few"] for r in rs])) if any(
                    not np.isnan(r["erm_few"]) for r in rs
                ) else float("nan"),
            }
        )
    return out


def table1(rows: list, metric: str = "erm_acc") -> list:
    """Methods as rows, one column per (rho, gamma) cell."""
    long = accuracy_table(rows)
    cols = sorted({(r["rho"], r["gamma"]) for r in long})
    out = []
    for method in dict.fromkeys(r["method"] for r in long):
        row = {"method": method}
        for rho, gamma in cols:
            hit = [r for r in long if r["method"] == method and r["rho"] == rho and r["gamma"] == gamma]
            row[f"rho{rho:g}_gamma{gamma:g}"] = hit[0][metric] if hit else float("nan")
        out.append(row)
    return out
