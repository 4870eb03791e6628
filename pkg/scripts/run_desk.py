"""Desk-scale experiment: 8 paired trials at T=200 with three competitors.

Writes CSV summaries, plot data and a text report to ``--out``.
"""

from __future__ import annotations

import argparse
import sys

from portfolio_pursuit.harness.cli import main


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results/desk", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (default: the shipped seed)")
    p.add_argument("--parallel", action="store_true", help="run trials in worker processes")
    return p.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    argv = ["run", "--profile", "desk", "--out", args.out]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if not args.parallel:
        argv.append("--sequential")
    sys.exit(main(argv))
