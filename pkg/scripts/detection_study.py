"""Per-class clean recall of prototypical detection against loss-based selection.

Trains plain ERM and RoLT on one benchmark draw and prints, per class, the
fraction of correctly labeled examples each detector keeps.
"""

import argparse

import numpy as np

from rolt.datasim import make_benchmark
from rolt.evaluation import per_class_detection
from rolt.experiments import run_cell, small_loss_comparison


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rho", type=float, default=100.0)
    p.add_argument("--gamma", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    data = make_benchmark(args.rho, args.gamma, args.seed)
    train_ds = data[0]
    rolt = run_cell(args.rho, args.gamma, args.seed, "rolt", data=data)
    erm = run_cell(args.rho, args.gamma, args.seed, "erm", data=data)
    k = train_ds.class_count
    proto_flag = rolt.result.last_output.split.is_clean()
    columns = {"prototype": proto_flag}
    for mode in ("global", "per_class"):
        columns[f"loss-{mode}"] = small_loss_comparison(train_ds, erm.result, mode).split.is_clean()

    counts = np.bincount(train_ds.true_labels, minlength=k)
    print(f"{'class':>5} {'count':>6}" + "".join(f"{name:>16}" for name in columns))
    scores = {name: per_class_detection(f, train_ds.noisy_labels, train_ds.true_labels, k) for name, f in columns.items()}
    for c in range(k):
        print(f"{c + 1:>5} {counts[c]:>6}" + "".join(f"{scores[n][c].recall:>16.3f}" for n in columns))


if __name__ == "__main__":
    main()
