"""Static NEES sweeps (a)-(d); writes CSVs and prints NEES per grid value."""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

from bistatic_ducm import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", default="results/fig3")
    args = ap.parse_args()
    code = cli.main(
        ["static-nees", "--runs", str(args.runs), "--seed", str(args.seed),
         "--threads", str(args.threads), "--out", args.out]
    )
    if code:
        return code
    for sweep in "abcd":
        with open(Path(args.out) / f"nees_{sweep}.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        table = defaultdict(dict)
        for r in rows:
            table[float(r["swept_value"])][r["method"]] = float(r["nees"])
        lo, hi = float(rows[0]["bound_low"]), float(rows[0]["bound_high"])
        print(f"sweep ({sweep}), bounds [{lo:.4f}, {hi:.4f}]")
        print(f"{'value':>10} {'conventional':>13} {'ucm':>8} {'ducm':>8}")
        for v, m in table.items():
            print(f"{v:10.4g} {m['conventional']:13.4f} {m['ucm']:8.4f} {m['ducm']:8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
