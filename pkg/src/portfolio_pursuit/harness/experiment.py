"""Run every trial and method of an experiment and write the summary CSVs."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import stats
from .config import ExperimentConfig, save_config
from .trial import TrialResult, run_burnin, run_test, trial_seed

log = logging.getLogger(__name__)

STEP_COLUMNS = ("trial", "seed", "method", "epoch", "t", "action", "k", "accepted", "profit", "loss", "reward")
EPOCH_COLUMNS = ("trial", "seed", "method", "epoch", "final_profit", "final_loss", "final_reward")
TRIAL_COLUMNS = ("trial", "seed", "method", "status", "n_epochs", "final_profit", "final_loss", "final_reward", "error")
AGGREGATE_COLUMNS = ("row", "kind", "n_trials", "final_profit", "final_loss", "final_reward",
                     "sd_profit", "sd_loss", "sd_reward")
COMPARISON_COLUMNS = ("method_a", "method_b", "metric", "unit", "alternative", "n_a", "n_b", "mean_a", "mean_b",
                      "u", "p", "cohens_d", "cles")

# one-sided where the hypothesis has a direction; loss is two-sided
METRIC_ALTERNATIVES = (("profit", "greater"), ("reward", "greater"), ("loss", "two-sided"))
PAIRS = (("rl", "baseline"), ("rl", "pipeline"), ("baseline", "pipeline"))


@dataclass
class TrialFailure:
    trial: int
    seed: int
    method: str
    error: str


@dataclass
class ExperimentOutcome:
    config: ExperimentConfig
    results: list[TrialResult]
    failures: list[TrialFailure] = field(default_factory=list)
    manifests: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def run_trial_all_methods(config: ExperimentConfig, trial: int) -> tuple[list[TrialResult], list[TrialFailure], dict | None]:
    """Shared burn-in once, then each method's test epochs.

    Heavy objects (burn-in records, value training data) are dropped from
    the results so they can cross process boundaries cheaply.
    """
    seed = trial_seed(config.seed, trial)
    results, failures = [], []
    try:
        burnin = run_burnin(config, seed)
    except Exception as e:  # noqa: BLE001 - recorded per trial, experiment continues
        log.warning("trial %d burn-in failed: %s", trial, e)
        err = f"burn-in: {type(e).__name__}: {e}"
        return [], [TrialFailure(trial, seed, m, err) for m in config.methods], None
    manifest = None
    for method in config.methods:
        t0 = time.perf_counter()
        try:
            res = run_test(config, burnin, method, trial)
        except Exception as e:  # noqa: BLE001
            log.warning("trial %d method %s failed: %s", trial, method, e)
            log.debug("%s", traceback.format_exc())
            failures.append(TrialFailure(trial, seed, method, f"{type(e).__name__}: {e}"))
            continue
        res.burnin = None
        res.value_training = None
        if manifest is None:
            manifest = {k: v for k, v in res.manifest.items() if k != "method"}
        results.append(res)
        log.info("trial %d %-8s reward %.1f (%.1fs)", trial, method, res.final_reward, time.perf_counter() - t0)
    return results, failures, manifest


def _run_one(args):
    config, trial = args
    return run_trial_all_methods(config, trial)


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None, *, sequential: bool = False,
                   workers: int | None = None) -> ExperimentOutcome:
    """Run all trials x methods; write summaries to ``out_dir`` when given.

    Trials run in worker processes unless ``sequential``; outputs are
    ordered by trial index either way.
    """
    jobs = [(config, i) for i in range(config.trials)]
    workers = workers or os.cpu_count() or 1
    if sequential or workers == 1 or config.trials == 1:
        outs = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, config.trials)) as pool:
            outs = list(pool.map(_run_one, jobs))
    outcome = ExperimentOutcome(config, [], [], [])
    for results, failures, manifest in outs:
        outcome.results.extend(results)
        outcome.failures.extend(failures)
        if manifest is not None:
            outcome.manifests.append(manifest)
    if out_dir is not None:
        write_outputs(outcome, out_dir)
    return outcome


# --------------------------------------------------------------------------
# writers


def write_steps(results: list[TrialResult], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for r in results:
            for e in r.epochs:
                for i in range(len(e.profit)):
                    w.writerow([_fmt(x) for x in (r.trial, r.seed, r.method, e.epoch, i + 1, e.action[i], e.k[i],
                                                  e.accepted[i], e.profit[i], e.loss[i], e.reward[i])])


def write_epochs(results: list[TrialResult], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_COLUMNS)
        for r in results:
            for e in r.epochs:
                w.writerow([_fmt(x) for x in (r.trial, r.seed, r.method, e.epoch, e.final_profit, e.final_loss,
                                              e.final_reward)])


def write_trials(outcome: ExperimentOutcome, path: Path) -> None:
    rows = []
    for r in outcome.results:
        rows.append((r.trial, r.method, [r.trial, r.seed, r.method, "ok", len(r.epochs), r.final_profit,
                                         r.final_loss, r.final_reward, ""]))
    for f in outcome.failures:
        rows.append((f.trial, f.method, [f.trial, f.seed, f.method, "failed", 0, "", "", "", f.error]))
    order = {m: i for i, m in enumerate(outcome.config.methods)}
    rows.sort(key=lambda x: (x[0], order.get(x[1], 99)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for _, _, row in rows:
            w.writerow([_fmt(x) for x in row])


def _sd(x: np.ndarray) -> float:
    return float(x.std(ddof=1)) if len(x) > 1 else 0.0


def aggregate_rows(per_method: dict[str, dict[str, np.ndarray]], methods) -> list[list]:
    """Mean final profit, loss and reward per method, then pairwise differences.

    Reward is written as profit minus loss of the same row so the identity
    holds exactly.
    """
    rows = []
    means = {}
    for m in methods:
        if m not in per_method:
            continue
        d = per_method[m]
        p, l = float(d["profit"].mean()), float(d["loss"].mean())
        means[m] = (p, l)
        rows.append([m, "method", len(d["profit"]), p, l, p - l, _sd(d["profit"]), _sd(d["loss"]), _sd(d["reward"])])
    for a, b in PAIRS:
        if a in means and b in means:
            p = means[a][0] - means[b][0]
            l = means[a][1] - means[b][1]
            rows.append([f"{a}-{b}", "difference", "", p, l, p - l, "", "", ""])
    return rows


def comparison_rows(values: dict[tuple[str, str], dict[str, np.ndarray]], methods) -> list[list]:
    """Stats for every method pair, metric and sampling unit.

    ``values[(unit, method)][metric]`` holds the samples.
    """
    rows = []
    units = sorted({u for u, _ in values})
    for (a, b), unit, (metric, alt) in itertools.product(PAIRS, units, METRIC_ALTERNATIVES):
        if (unit, a) not in values or (unit, b) not in values:
            continue
        xa, xb = values[(unit, a)][metric], values[(unit, b)][metric]
        u, p = stats.mann_whitney_u(xa, xb, alternative=alt)
        try:
            d = stats.cohens_d(xa, xb)
        except ValueError:
            d = float("nan")
        rows.append([a, b, metric, unit, alt, len(xa), len(xb), float(xa.mean()), float(xb.mean()), u, p, d,
                     stats.cles(xa, xb)])
    return rows


def _collect(outcome: ExperimentOutcome):
    per_trial: dict[str, dict[str, list]] = {}
    per_epoch: dict[str, dict[str, list]] = {}
    for r in outcome.results:
        t = per_trial.setdefault(r.method, {"profit": [], "loss": [], "reward": []})
        e = per_epoch.setdefault(r.method, {"profit": [], "loss": [], "reward": []})
        for name in ("profit", "loss", "reward"):
            t[name].append(getattr(r, f"final_{name}"))
            e[name].extend(r.finals(name).tolist())
    arr = lambda d: {m: {k: np.array(v) for k, v in x.items()} for m, x in d.items()}  # noqa: E731
    return arr(per_trial), arr(per_epoch)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_outputs(outcome: ExperimentOutcome, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(outcome.config, out / "config.json")
    write_steps(outcome.results, out / "steps.csv")
    write_epochs(outcome.results, out / "epochs.csv")
    write_trials(outcome, out / "trials.csv")
    per_trial, per_epoch = _collect(outcome)
    _write_rows(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_rows(per_trial, outcome.config.methods))
    values = {("trial", m): v for m, v in per_trial.items()}
    values.update({("trial_epoch", m): v for m, v in per_epoch.items()})
    _write_rows(out / "comparisons.csv", COMPARISON_COLUMNS, comparison_rows(values, outcome.config.methods))
    (out / "manifests.json").write_text(json.dumps(outcome.manifests, indent=1, sort_keys=True) + "\n")


__all__ = [
    "ExperimentOutcome", "TrialFailure", "run_experiment", "run_trial_all_methods", "write_outputs",
    "aggregate_rows", "comparison_rows", "STEP_COLUMNS", "EPOCH_COLUMNS", "TRIAL_COLUMNS", "AGGREGATE_COLUMNS",
    "COMPARISON_COLUMNS", "PAIRS", "METRIC_ALTERNATIVES",
]
