"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 partial trial failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import stats
from ..market_env import write_records_csv
from .config import METHODS, ConfigError, ExperimentConfig, load_config, profile
from .experiment import ExperimentOutcome, TrialFailure, run_experiment, write_outputs
from .report import ReportError, report
from .trial import models_blob, run_burnin, run_test, trial_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=("desk", "paper"), default="desk", help="base settings (default: desk)")
    p.add_argument("--config", type=Path, help="JSON file of ExperimentConfig fields overlaid on the profile")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--method", action="append", choices=METHODS,
                   help="method to run; repeat for several (default: all in the config)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="portfolio-pursuit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full experiment: all trials and methods, then the report")
    _add_common(run)
    run.add_argument("--trials", type=int, help="override the number of trials")
    run.add_argument("--sequential", action="store_true", help="run trials one after another in this process")
    run.add_argument("--workers", type=int, help="worker processes for parallel trials")

    trial = sub.add_parser("trial", help="one trial: burn-in log, manifest, models and test series")
    _add_common(trial)
    trial.add_argument("--trial", type=int, default=0, help="trial index under the master seed")
    trial.add_argument("--sequential", action="store_true", help="accepted for symmetry; trials are serial")

    st = sub.add_parser("stats", help="compare two numeric columns of CSV files")
    st.add_argument("csv", type=Path, help="CSV file holding column A (and B unless --csv-b is given)")
    st.add_argument("column_a")
    st.add_argument("column_b")
    st.add_argument("--csv-b", type=Path, help="read column B from this file instead")
    st.add_argument("--alternative", choices=stats.ALTERNATIVES, default="two-sided")

    rep = sub.add_parser("report", help="plot data and text report from a results directory")
    rep.add_argument("--out", type=Path, default=Path("results"), help="results directory")
    return parser


def resolve_config(args) -> ExperimentConfig:
    config = profile(args.profile)
    if args.config is not None:
        config = load_config(args.config, config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.method:
        changes["methods"] = tuple(dict.fromkeys(args.method))
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if changes:
        try:
            config = config.replace(**changes)
        except TypeError as e:
            raise ConfigError(str(e)) from None
    return config


def _cmd_run(args) -> int:
    config = resolve_config(args)
    outcome = run_experiment(config, args.out, sequential=args.sequential, workers=args.workers)
    if outcome.results:
        print(report(args.out), end="")
    for f in outcome.failures:
        print(f"trial {f.trial} {f.method} failed: {f.error}", file=sys.stderr)
    return EXIT_OK if outcome.ok else EXIT_PARTIAL


def _cmd_trial(args) -> int:
    config = resolve_config(args)
    seed = trial_seed(config.seed, args.trial)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    burnin = run_burnin(config, seed)
    write_records_csv(burnin.records, out / "burnin.csv")
    (out / "models.pzoo").write_bytes(models_blob(burnin))
    outcome = ExperimentOutcome(config.replace(trials=1), [], [], [])
    for method in config.methods:
        try:
            res = run_test(config, burnin, method, args.trial)
        except Exception as e:  # noqa: BLE001
            outcome.failures.append(TrialFailure(args.trial, seed, method, f"{type(e).__name__}: {e}"))
            continue
        if res.value_training is not None:
            res.value_training.dataset.to_csv(out / "value_estimates.csv")
        if not outcome.manifests:
            outcome.manifests.append({k: v for k, v in res.manifest.items() if k != "method"})
        outcome.results.append(res)
        print(f"{method:<9} profit {res.final_profit:10.1f}  loss {res.final_loss:9.1f}  reward {res.final_reward:10.1f}")
    write_outputs(outcome, out)
    if outcome.manifests:
        (out / "manifest.json").write_text(json.dumps(outcome.manifests[0], indent=1, sort_keys=True) + "\n")
    for f in outcome.failures:
        print(f"{f.method} failed: {f.error}", file=sys.stderr)
    return EXIT_OK if outcome.ok else EXIT_PARTIAL


def _read_column(path: Path, column: str) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if column not in (reader.fieldnames or []):
                raise ConfigError(f"{path} has no column {column!r}")
            vals = [row[column] for row in reader if row[column] != ""]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        return np.array(vals, dtype=float)
    except ValueError:
        raise ConfigError(f"column {column!r} of {path} is not numeric") from None


def _cmd_stats(args) -> int:
    a = _read_column(args.csv, args.column_a)
    b = _read_column(args.csv_b or args.csv, args.column_b)
    try:
        u, p = stats.mann_whitney_u(a, b, alternative=args.alternative)
        cl = stats.cles(a, b)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    try:
        d = f"{stats.cohens_d(a, b):.4f}"
    except ValueError as e:
        d = f"undefined ({e})"
    print(f"n_a={len(a)} n_b={len(b)} mean_a={a.mean():.4f} mean_b={b.mean():.4f}")
    print(f"mann_whitney_u U={u:.1f} p={p:.6g} ({args.alternative})")
    print(f"cohens_d {d}")
    print(f"cles {cl:.4f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        print(report(args.out), end="")
    except ReportError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "trial": _cmd_trial, "stats": _cmd_stats, "report": _cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
