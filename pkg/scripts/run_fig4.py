"""Tracking campaign; writes CSVs and prints RMSE / NEES at selected scans."""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

from bistatic_ducm import cli

SHOW = (1, 5, 10, 25, 50, 110, 150, 200)


def load(path):
    out = defaultdict(dict)
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out[r["method"]][int(r["scan"])] = r
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", default="results/fig4")
    args = ap.parse_args()
    code = cli.main(
        ["track", "--preset", "fig4", "--runs", str(args.runs), "--seed", str(args.seed),
         "--threads", str(args.threads), "--out", args.out]
    )
    if code:
        return code
    rmse = load(Path(args.out) / "track_rmse.csv")
    nees = load(Path(args.out) / "track_nees.csv")
    methods = list(rmse)
    print("scan " + " ".join(f"{m + ' rmse':>18} {m + ' nees':>18}" for m in methods))
    for k in SHOW:
        if k not in rmse[methods[0]]:
            continue
        cells = (
            f"{float(rmse[m][k]['rmse_pos']):18.2f} {float(nees[m][k]['nees']):18.3f}" for m in methods
        )
        print(f"{k:4d} " + " ".join(cells))
    return 0


if __name__ == "__main__":
    sys.exit(main())
