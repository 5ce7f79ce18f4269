"""Command-line entry point: ``rolt {simulate,detect,train,eval,sweep,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import io
from .datasim import BenchmarkSpec, make_benchmark
from .experiments import Grid, accuracy_table, run_grid, table1
from .gmm import detect
from .model import predict_erm
from .prototypes import predict_ncm
from .trainer import TrainConfig, prototype_space, train

log = logging.getLogger("rolt")


def cmd_simulate(args) -> int:
    spec = BenchmarkSpec(args.classes, args.dim, args.base, args.sep, args.noise_std, args.test_per_class)
    train_ds, test_ds = make_benchmark(args.rho, args.gamma, args.seed, spec)
    out = Path(args.out)
    io.write_dataset(train_ds, out / "train")
    io.write_dataset(test_ds, out / "test")
    flipped = int((train_ds.noisy_labels != train_ds.true_labels).sum())
    print(f"wrote {train_ds.size} train ({flipped} mislabeled) and {test_ds.size} test examples to {out}")
    return 0


def cmd_detect(args) -> int:
    train_ds, _ = io.resolve_data(args.data)
    config = TrainConfig(normalize_embeddings=not args.raw)
    det = detect(
        prototype_space(train_ds.embeddings, config),
        train_ds.noisy_labels,
        train_ds.class_count,
        refinement_rounds=args.rounds,
        min_class_size=args.min_class_size,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flag = det.split.is_clean()
    io.write_split_csv(out / "split.csv", train_ds.noisy_labels, flag, det)
    io.write_gmm_json(out / "gmm.json", det.fits)
    io.save_prototypes(det.prototypes, out / "prototypes.json")
    print(f"clean {int(flag.sum())} / noisy {int((~flag).sum())}")
    if train_ds.true_labels is not None:
        s = ev.detection_scores(flag, train_ds.noisy_labels, train_ds.true_labels)["overall"]
        print(f"precision {s.precision:.4f} recall {s.recall:.4f}")
    return 0


def write_run(out: Path, result, train_ds, test_ds, config: TrainConfig, data_path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_report_csv(out / "report.csv", result.report, train_ds.class_count)
    io.save_model(result.model, out / "model.json")
    io.save_prototypes(result.prototypes, out / "prototypes.json")
    last = result.last_output
    if last is not None:
        io.write_split_csv(out / "split.csv", train_ds.noisy_labels, last.split.is_clean(), last.detection)
        io.write_labels_csv(out / "labels.csv", train_ds.noisy_labels, last.targets)
    run = {
        "data": str(Path(data_path).resolve()) if data_path is not None else None,
        "dataset_hash": result.report.dataset_hash,
        "config": config.to_dict(),
    }
    with open(out / "run.json", "w") as fh:
        json.dump(run, fh, indent=2)


def cmd_train(args) -> int:
    train_ds, test_ds = io.resolve_data(args.data)
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    result = train(train_ds, config, test_ds)
    write_run(Path(args.out), result, train_ds, test_ds, config, args.data)
    last = result.report.last() if result.report.records else None
    if last is not None and not np.isnan(last.erm_acc):
        print(f"final balanced accuracy: ERM {last.erm_acc:.4f}  NCM {last.ncm_acc:.4f}")
    return 0


def evaluate_run(run_dir: Path, data=None) -> dict:
    with open(run_dir / "run.json") as fh:
        run = json.load(fh)
    config = TrainConfig.from_dict(run["config"])
    train_ds, test_ds = io.resolve_data(data or run["data"])
    if test_ds is None:
        raise SystemExit("no test split found next to the training data")
    model = io.load_model(run_dir / "model.json")
    protos = io.load_prototypes(run_dir / "prototypes.json")
    k = test_ds.class_count
    truth = test_ds.true_labels if test_ds.true_labels is not None else test_ds.noisy_labels
    _, erm_pred = predict_erm(model, test_ds.embeddings)
    _, ncm_pred = predict_ncm(protos, prototype_space(test_ds.embeddings, config))
    erm_acc, erm_rec = ev.balanced_accuracy(erm_pred, truth, k)
    ncm_acc, ncm_rec = ev.balanced_accuracy(ncm_pred, truth, k)
    counts = train_ds.class_counts() if train_ds.true_labels is None else np.bincount(train_ds.true_labels, minlength=k)
    shots = ev.shot_split(counts)
    metrics = {
        "dataset_hash": train_ds.fingerprint(),
        "erm_acc": erm_acc,
        "ncm_acc": ncm_acc,
        "erm_recalls": erm_rec.tolist(),
        "ncm_recalls": ncm_rec.tolist(),
        "erm_recall_std": ev.recall_std(erm_rec),
        "ncm_recall_std": ev.recall_std(ncm_rec),
        "erm_confusion": ev.confusion_matrix(erm_pred, truth, k).tolist(),
        "ncm_confusion": ev.confusion_matrix(ncm_pred, truth, k).tolist(),
    }
    for name, classes in shots.buckets().items():
        metrics[f"erm_{name}"] = ev.bucket_mean(erm_rec, classes)
        metrics[f"ncm_{name}"] = ev.bucket_mean(ncm_rec, classes)
    split_path = run_dir / "split.csv"
    if split_path.exists() and train_ds.true_labels is not None:
        labels, flag = io.read_split_csv(split_path)
        for name, s in ev.detection_scores(flag, labels, train_ds.true_labels, shots).items():
            metrics[f"det_{name}_precision"] = s.precision
            metrics[f"det_{name}_recall"] = s.recall
    return metrics


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    metrics = evaluate_run(run_dir, args.data)
    with open(run_dir / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
    rows = [(k, v) for k, v in metrics.items() if isinstance(v, float)]
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v:.4f}")
    return 0


def cmd_sweep(args) -> int:
    with open(args.grid) as fh:
        grid = Grid.from_dict(json.load(fh))
    out = Path(args.out) if args.out else Path(args.grid).with_suffix("")
    runs = out / "runs"
    rows = []
    for cell in run_grid(grid):
        name = f"rho{cell.rho:g}_gamma{cell.gamma:g}_{cell.method}_seed{cell.seed}"
        run_dir = runs / name
        run_dir.mkdir(parents=True, exist_ok=True)
        io.write_report_csv(run_dir / "report.csv", cell.result.report, len(cell.metrics["counts"]))
        with open(run_dir / "metrics.json", "w") as fh:
            json.dump(cell.row(), fh, indent=1)
        rows.append(cell.row())
        print(f"{name}: ERM-head {cell.metrics['erm_acc']:.4f}  NCM {cell.metrics['ncm_acc']:.4f}")
    io.write_rows_csv(out / "table.csv", accuracy_table(rows))
    io.write_rows_csv(out / "table1.csv", table1(rows))
    print(f"tables written to {out}")
    return 0


def cmd_report(args) -> int:
    root = Path(args.grid)
    rows = []
    for path in sorted(root.glob("**/metrics.json")):
        with open(path) as fh:
            row = json.load(fh)
        if "method" in row:
            rows.append(row)
    if not rows:
        raise SystemExit(f"no sweep metrics found under {root}")
    io.write_rows_csv(root / "table.csv", accuracy_table(rows))
    io.write_rows_csv(root / "table1.csv", table1(rows))
    recall_rows, det_rows = [], []
    for r in rows:
        key = {"rho": r["rho"], "gamma": r["gamma"], "method": r["method"], "seed": r["seed"]}
        for c, (er, nr) in enumerate(zip(r["erm_recalls"], r["ncm_recalls"])):
            recall_rows.append({**key, "class": c + 1, "train_count": r["counts"][c], "erm_recall": er, "ncm_recall": nr})
        for c, (p, rc) in enumerate(zip(r.get("det_class_precision", []), r.get("det_class_recall", []))):
            det_rows.append({**key, "class": c + 1, "train_count": r["counts"][c], "precision": p, "recall": rc})
    io.write_rows_csv(root / "per_class_recall.csv", recall_rows)
    io.write_rows_csv(root / "detection_per_class.csv", det_rows)
    for t in accuracy_table(rows):
        print(f"rho={t['rho']:<5g} gamma={t['gamma']:<4g} {t['method']:<9} {t['erm_acc']:6.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rolt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a long-tailed noisy blob dataset")
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--base", type=int, default=1000)
    s.add_argument("--rho", type=float, default=100.0)
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--sep", type=float, default=6.0)
    s.add_argument("--noise-std", type=float, default=1.0)
    s.add_argument("--test-per-class", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("detect", help="prototypical noise detection on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--rounds", type=int, default=1, help="prototype refinement rounds")
    s.add_argument("--min-class-size", type=int, default=5)
    s.add_argument("--raw", action="store_true", help="use un-normalised embeddings for distances")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("train", help="train ERM or RoLT")
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="JSON file with TrainConfig fields")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a training run on its test split")
    s.add_argument("--run", required=True)
    s.add_argument("--data", help="override the data directory recorded in run.json")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="run a (rho, gamma, method, seed) grid on the benchmark")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", help="output directory (default: grid file name without suffix)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", help="aggregate sweep outputs into summary CSVs")
    s.add_argument("--grid", required=True, help="sweep output directory")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
