"""On-disk formats: dataset directories, checkpoints, split/label/report CSVs.

Labels on disk are 1-based; example indices are 0-based row offsets.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .datasim import LabeledDataset
from .gmm import DetectionResult, GmmFit
from .model import LinearModel
from .prototypes import PrototypeSet
from .pseudolabel import Targets

_HEADER = struct.Struct("<QQ")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_embeddings(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*x.shape))
        fh.write(x.tobytes())


def read_embeddings(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, d = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * d:
        raise ValueError(f"{path}: header says {n}x{d}, found {data.size} values")
    return data.reshape(n, d).astype(np.float64)


def read_embeddings_csv(path) -> np.ndarray:
    x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    return x


def _write_labels(path, labels) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{int(v) + 1}\n" for v in labels)


def _read_labels(path) -> np.ndarray:
    vals = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if vals.size and vals.min() < 1:
        raise ValueError(f"{path}: labels must be 1-based")
    return vals - 1


def write_dataset(ds: LabeledDataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "K": ds.class_count,
        "N": ds.size,
        "D": ds.dim,
        "split_tag": ds.split_tag,
        "seed": ds.meta.get("seed"),
        "profile": ds.meta.get("profile"),
    }
    meta.update({k: v for k, v in ds.meta.items() if k not in meta})
    with open(d / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
    write_embeddings(d / "embeddings.f64", ds.embeddings)
    _write_labels(d / "noisy_labels.csv", ds.noisy_labels)
    if ds.true_labels is not None:
        _write_labels(d / "true_labels.csv", ds.true_labels)
    return d


def read_dataset(directory) -> LabeledDataset:
    """Load a dataset directory; ``embeddings.csv`` is accepted in place of the binary file."""
    d = Path(directory)
    with open(d / "meta.json") as fh:
        meta = json.load(fh)
    if (d / "embeddings.f64").exists():
        x = read_embeddings(d / "embeddings.f64")
    elif (d / "embeddings.csv").exists():
        x = read_embeddings_csv(d / "embeddings.csv")
    else:
        raise FileNotFoundError(f"{d}: no embeddings.f64 or embeddings.csv")
    if "N" in meta and "D" in meta and x.shape != (meta["N"], meta["D"]):
        raise ValueError(f"{d}: embeddings are {x.shape}, meta says {(meta['N'], meta['D'])}")
    noisy = _read_labels(d / "noisy_labels.csv")
    true = _read_labels(d / "true_labels.csv") if (d / "true_labels.csv").exists() else None
    extra = {k: v for k, v in meta.items() if k not in ("K", "N", "D", "split_tag")}
    return LabeledDataset(x, noisy, int(meta["K"]), true, meta.get("split_tag", "train"), extra)


def resolve_data(directory) -> tuple[LabeledDataset, Optional[LabeledDataset]]:
    """A dataset directory, or a directory holding ``train/`` and optionally ``test/``."""
    d = Path(directory)
    if (d / "meta.json").exists():
        return read_dataset(d), None
    if not (d / "train").exists():
        raise FileNotFoundError(f"{d}: not a dataset directory and no train/ subdirectory")
    test = read_dataset(d / "test") if (d / "test").exists() else None
    return read_dataset(d / "train"), test


def save_model(model: LinearModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "K": model.class_count,
                "D": model.dim,
                "W": model.weights.ravel().tolist(),
                "b": model.bias.tolist(),
            },
            fh,
        )


def load_model(path) -> LinearModel:
    with open(path) as fh:
        d = json.load(fh)
    w = np.asarray(d["W"], dtype=np.float64).reshape(d["K"], d["D"])
    return LinearModel(w, np.asarray(d["b"], dtype=np.float64))


def save_prototypes(protos: PrototypeSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(protos.to_dict(), fh)


def load_prototypes(path) -> PrototypeSet:
    with open(path) as fh:
        return PrototypeSet.from_dict(json.load(fh))


def write_split_csv(path, labels: np.ndarray, is_clean: np.ndarray, detection: Optional[DetectionResult] = None):
    n = len(labels)
    dist = detection.distances if detection is not None else np.full(n, np.nan)
    dens = np.exp(detection.log_densities) if detection is not None else np.full((n, 2), np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["example_index", "assigned_label", "flag", "distance", "component1_density", "component2_density"])
        for i in range(n):
            w.writerow(
                [i, int(labels[i]) + 1, "clean" if is_clean[i] else "noisy", _fmt(dist[i]), _fmt(dens[i, 0]), _fmt(dens[i, 1])]
            )


def read_split_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(assigned labels 0-based, clean flags)."""
    labels, flags = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels.append(int(row["assigned_label"]) - 1)
            flags.append(row["flag"] == "clean")
    return np.asarray(labels, dtype=np.int64), np.asarray(flags, dtype=bool)


def write_gmm_json(path, fits: list) -> None:
    with open(path, "w") as fh:
        json.dump([{"class": k + 1, **f.to_dict()} for k, f in enumerate(fits)], fh, indent=1)


def read_gmm_json(path) -> list:
    with open(path) as fh:
        raw = json.load(fh)
    return [
        GmmFit(
            np.asarray(f["weights"]),
            np.asarray(f["means"]),
            np.asarray(f["stds"]),
            float("nan") if f["log_likelihood"] is None else f["log_likelihood"],
            f["iterations"],
            f["converged"],
            f["degenerate"],
        )
        for f in raw
    ]


def write_labels_csv(path, labels: np.ndarray, targets: Targets) -> None:
    k = targets.targets.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["example_index", "flag", "original_label", "erm_guess", "ncm_guess"] + [f"p{c + 1}" for c in range(k)]
        )
        for i in range(len(labels)):
            w.writerow(
                [
                    i,
                    "clean" if targets.is_clean[i] else "noisy",
                    int(labels[i]) + 1,
                    int(targets.erm_guess[i]) + 1,
                    int(targets.ncm_guess[i]) + 1,
                ]
                + [_fmt(p) for p in targets.targets[i]]
            )


def read_labels_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(clean flags, soft targets) from a labels.csv export."""
    flags, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        first_p = header.index("p1")
        for row in reader:
            flags.append(row[1] == "clean")
            rows.append([float(v) for v in row[first_p:]])
    return np.asarray(flags, dtype=bool), np.asarray(rows)


REPORT_FIELDS = [
    "epoch", "stage", "lr", "drw_active", "loss", "loss_clean", "loss_noisy",
    "n_clean", "n_noisy", "det_precision", "det_recall", "erm_acc", "ncm_acc",
]


def write_report_csv(path, report, class_count: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            REPORT_FIELDS
            + [f"erm_recall_{c + 1}" for c in range(class_count)]
            + [f"ncm_recall_{c + 1}" for c in range(class_count)]
        )
        for r in report.records:
            base = [r.epoch, r.stage] + [_fmt(getattr(r, f)) for f in REPORT_FIELDS[2:]]
            erm = [_fmt(v) for v in r.erm_recalls] or [""] * class_count
            ncm = [_fmt(v) for v in r.ncm_recalls] or [""] * class_count
            w.writerow(base + erm + ncm)


def read_report_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_rows_csv(path, rows: list, fields: Optional[list] = None) -> None:
    if not rows:
        Path(path).write_text("")
        return
    fields = fields or list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})
