"""Full-scale experiment: 24 paired trials at T=1000, lambda=2000, five competitors.

Expect several hours on one core; pass ``--workers`` to spread trials.
The report lists reference values next to the measured ones.
"""

from __future__ import annotations

import argparse
import sys

from portfolio_pursuit.harness.cli import main


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results/paper", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (default: the shipped seed)")
    p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    p.add_argument("--trials", type=int, help="run fewer trials than the full 24")
    return p.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    argv = ["run", "--profile", "paper", "--out", args.out]
    for flag in ("seed", "workers", "trials"):
        value = getattr(args, flag)
        if value is not None:
            argv += [f"--{flag}", str(value)]
    sys.exit(main(argv))
