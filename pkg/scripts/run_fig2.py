"""Static conversion bias versus bearing; writes CSVs and prints |bias| / SE."""

import argparse
import csv
import sys
from pathlib import Path

from bistatic_ducm import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/fig2")
    args = ap.parse_args()
    code = cli.main(
        ["static-bias", "--preset", "fig2", "--runs", str(args.runs), "--seed", str(args.seed),
         "--out", args.out]
    )
    if code:
        return code
    with open(Path(args.out) / "bias_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'bearing':>8} {'method':>13} {'bias_x':>9} {'bias_y':>9} {'z_x':>7} {'z_y':>7}")
    for r in rows:
        bx = float(r["mean_x"]) - float(r["truth_x"])
        by = float(r["mean_y"]) - float(r["truth_y"])
        print(
            f"{float(r['bearing_deg']):8.0f} {r['method']:>13} {bx:9.3f} {by:9.3f} "
            f"{abs(bx) / float(r['se_x']):7.2f} {abs(by) / float(r['se_y']):7.2f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
