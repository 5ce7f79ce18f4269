"""Run a method grid on the blob benchmark and print the accuracy table.

    python scripts/run_benchmark.py --grid scripts/grid.json --out runs/table.csv
"""

import argparse
import json
import logging

from rolt import io
from rolt.experiments import Grid, accuracy_table, run_grid, table1


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--grid", default="scripts/grid.json")
    p.add_argument("--out", help="write the long-format table here as CSV")
    p.add_argument("--metric", default="erm_acc", choices=["erm_acc", "ncm_acc", "best_erm_acc", "erm_few"])
    p.add_argument("--epochs", type=int, nargs=2, metavar=("WARMUP", "ROBUST"), help="override epoch counts")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    with open(args.grid) as fh:
        grid = Grid.from_dict(json.load(fh))
    if args.epochs:
        grid.config.update(warmup_epochs=args.epochs[0], robust_epochs=args.epochs[1])
    rows = [cell.row() for cell in run_grid(grid)]

    table = table1(rows, args.metric)
    cols = [c for c in table[0] if c != "method"]
    print(f"{'method':<10}" + "".join(f"{c:>18}" for c in cols))
    for r in table:
        print(f"{r['method']:<10}" + "".join(f"{r[c]:>18.2f}" for c in cols))
    if args.out:
        io.write_rows_csv(args.out, accuracy_table(rows))


if __name__ == "__main__":
    main()
