#!/usr/bin/env python3
"""Reproduce the benchmark comparison at desk scale.

Runs both schemes on the d=2 benchmark for a list of fractional orders and
writes, per order, the study CSVs plus plot-ready figure data:

* error against mesh size with reference slopes h and h*|ln h|^s;
* error against total degrees of freedom, both schemes merged and sorted.

Typical use:

    python scripts/reproduce_figures.py --out results/benchmark --levels 5
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fracdiff.cli import main as cli_main  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/benchmark", help="output path base")
    parser.add_argument("--levels", type=int, default=5,
                        help="refinement levels (cells double from 8 per direction)")
    parser.add_argument("--orders", default="0.2,0.8",
                        help="comma-separated fractional orders")
    parser.add_argument("--d", type=int, default=2, choices=[1, 2])
    args = parser.parse_args()

    for s in (float(tok) for tok in args.orders.split(",")):
        base = f"{args.out}_s{s:g}"
        print(f"== scheme comparison for s={s:g} ({args.levels} levels, d={args.d}) ==")
        code = cli_main([
            "compare",
            "--s", str(s),
            "--d", str(args.d),
            "--levels", str(args.levels),
            "--out", base,
        ])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
