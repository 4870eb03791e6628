"""One paired trial: shared burn-in, then every method's test epochs.

Prints final profit, loss and reward per method and the spread of the
RL k-values, which shows how far the RL quotes move from the pipeline.
"""

from __future__ import annotations

import argparse

import numpy as np

from portfolio_pursuit.harness import profile, run_burnin
from portfolio_pursuit.harness.config import load_config
from portfolio_pursuit.harness.trial import run_test, trial_seed


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--config", help="JSON overrides on top of the profile")
    p.add_argument("--trial", type=int, default=0, help="trial index under the master seed")
    return p.parse_args(argv)


def main(argv=None) -> None:
    args = parse_args(argv)
    config = profile(args.profile)
    if args.config:
        config = load_config(args.config, config)
    seed = trial_seed(config.seed, args.trial)
    burnin = run_burnin(config, seed)
    print(f"trial {args.trial} seed {seed}")
    print(f"target {burnin.target.tolist()}  historic {np.round(burnin.f_bar, 1).tolist()}")
    print(f"baseline params n={burnin.baseline_params.n} beta={burnin.baseline_params.beta}")
    for method in config.methods:
        res = run_test(config, burnin, method, args.trial)
        line = (f"{method:<9} profit {res.final_profit:9.1f}  loss {res.final_loss:8.1f}  "
                f"reward {res.final_reward:9.1f}")
        if method == "rl":
            k = np.concatenate([e.k for e in res.epochs])
            lo, mid, hi = np.percentile(k, [5, 50, 95])
            line += f"  k 5/50/95% {lo:.3f}/{mid:.3f}/{hi:.3f}"
        print(line)


if __name__ == "__main__":
    main()
