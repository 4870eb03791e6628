"""Plot data and a text summary from an experiment's output directory."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, from_dict
from .experiment import (
    AGGREGATE_COLUMNS,
    COMPARISON_COLUMNS,
    EPOCH_COLUMNS,
    STEP_COLUMNS,
    _write_rows,
    aggregate_rows,
    comparison_rows,
)

FIG_COLUMNS = ("grouping", "method", "t", "n", "profit_mean", "profit_sd", "loss_mean", "loss_sd",
               "reward_mean", "reward_sd")

# reference final means at T=1000, lambda=2000, five competitors
REFERENCE = {
    "rl": {"profit": 6916.0, "loss": 856.0, "reward": 6060.0},
    "baseline": {"profit": 6444.0, "loss": 834.0, "reward": 5610.0},
}
REFERENCE_FLAG = "reference-only, environment differs"


class ReportError(ValueError):
    pass


def _read_csv(path: Path, required) -> list[dict]:
    if not path.exists():
        raise ReportError(f"missing file {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ReportError(f"{path.name} lacks columns: {', '.join(missing)}")
        return list(reader)


def _sd(x, axis=0):
    n = x.shape[axis]
    return x.std(axis=axis, ddof=1) if n > 1 else np.zeros(np.delete(x.shape, axis))


def figure_series(steps: list[dict]) -> list[list]:
    """Mean and sd per step and method, over trials and over trial-epochs.

    The trial grouping first averages each trial's test epochs, so its last
    point equals the mean of per-trial final values.
    """
    series: dict[tuple[str, int, int], dict[str, list]] = {}
    for row in steps:
        key = (row["method"], int(row["trial"]), int(row["epoch"]))
        d = series.setdefault(key, {"profit": [], "loss": [], "reward": []})
        for name in d:
            d[name].append(float(row[name]))
    methods = list(dict.fromkeys(k[0] for k in series))
    out = []
    for method in methods:
        keys = sorted(k for k in series if k[0] == method)
        arr = {name: np.array([series[k][name] for k in keys]) for name in ("profit", "loss", "reward")}
        trials = sorted({k[1] for k in keys})
        by_trial = {name: np.array([arr[name][[i for i, k in enumerate(keys) if k[1] == tr]].mean(axis=0)
                                    for tr in trials]) for name in arr}
        for grouping, data in (("trial", by_trial), ("trial_epoch", arr)):
            n = data["profit"].shape[0]
            mean = {k: v.mean(axis=0) for k, v in data.items()}
            sd = {k: _sd(v) for k, v in data.items()}
            for t in range(data["profit"].shape[1]):
                out.append([grouping, method, t + 1, n, mean["profit"][t], sd["profit"][t], mean["loss"][t],
                            sd["loss"][t], mean["reward"][t], sd["reward"][t]])
    return out


def _load_config(summary: Path) -> ExperimentConfig | None:
    path = summary / "config.json"
    if not path.exists():
        return None
    return from_dict(json.loads(path.read_text()))


def is_paper_scale(config: ExperimentConfig | None) -> bool:
    return config is not None and config.T == 1000 and config.lam == 2000.0 and config.competitors == 5


def report(summary_dir: str | Path) -> str:
    """Write ``fig1_data.csv`` and ``report.txt``; return the report text."""
    summary = Path(summary_dir)
    steps = _read_csv(summary / "steps.csv", STEP_COLUMNS)
    epochs = _read_csv(summary / "epochs.csv", EPOCH_COLUMNS)
    config = _load_config(summary)
    _write_rows(summary / "fig1_data.csv", FIG_COLUMNS, figure_series(steps))

    methods = list(dict.fromkeys(r["method"] for r in epochs))
    per_epoch: dict[str, dict[str, list]] = {}
    per_trial_raw: dict[tuple[str, int], dict[str, list]] = {}
    for r in epochs:
        m = r["method"]
        d = per_epoch.setdefault(m, {"profit": [], "loss": [], "reward": []})
        t = per_trial_raw.setdefault((m, int(r["trial"])), {"profit": [], "loss": [], "reward": []})
        for name in d:
            d[name].append(float(r[f"final_{name}"]))
            t[name].append(float(r[f"final_{name}"]))
    per_trial: dict[str, dict[str, np.ndarray]] = {}
    for (m, _), d in sorted(per_trial_raw.items(), key=lambda kv: (methods.index(kv[0][0]), kv[0][1])):
        x = per_trial.setdefault(m, {"profit": [], "loss": [], "reward": []})
        for name in x:
            x[name].append(float(np.mean(d[name])))
    per_trial = {m: {k: np.array(v) for k, v in d.items()} for m, d in per_trial.items()}
    per_epoch = {m: {k: np.array(v) for k, v in d.items()} for m, d in per_epoch.items()}

    agg = aggregate_rows(per_trial, methods)
    values = {("trial", m): v for m, v in per_trial.items()}
    values.update({("trial_epoch", m): v for m, v in per_epoch.items()})
    comps = comparison_rows(values, methods)

    lines = ["Final values (mean over trials of the per-trial test-epoch mean)", ""]
    lines.append(f"{'row':<18}{'profit':>12}{'loss':>12}{'reward':>12}{'n':>6}")
    for row in agg:
        label, kind, n, p, l, rw = row[:6]
        lines.append(f"{label:<18}{p:>12.1f}{l:>12.1f}{rw:>12.1f}{str(n):>6}")
    lines += ["", "Tests (a vs b): metric, unit, alternative, U, p, Cohen's d, CLES", ""]
    for c in comps:
        a, b, metric, unit, alt, na, nb, ma, mb, u, p, d, cl = c
        lines.append(f"{a} vs {b}: {metric:<7}{unit:<12}{alt:<10} U={u:<9.1f} p={p:<10.4g} d={d:<8.3f} "
                     f"CLES={cl:.3f} (n={na}/{nb})")
    lines += ["", "Terminal means of the plotted series (trial grouping)", ""]
    for m in methods:
        d = per_trial[m]
        lines.append(f"{m:<10} profit {d['profit'].mean():.1f}  loss {d['loss'].mean():.1f}  "
                     f"reward {d['profit'].mean() - d['loss'].mean():.1f}")
    if is_paper_scale(config):
        lines += ["", f"Reference values ({REFERENCE_FLAG})", ""]
        lines.append(f"{'method':<10}{'metric':<8}{'measured':>12}{'reference':>12}")
        for m, ref in REFERENCE.items():
            if m not in per_trial:
                continue
            for name, v in ref.items():
                measured = per_trial[m][name].mean() if name != "reward" else (
                    per_trial[m]["profit"].mean() - per_trial[m]["loss"].mean())
                lines.append(f"{m:<10}{name:<8}{measured:>12.1f}{v:>12.1f}  {REFERENCE_FLAG}")
    text = "\n".join(lines) + "\n"
    (summary / "report.txt").write_text(text)
    return text


__all__ = ["report", "figure_series", "ReportError", "REFERENCE", "REFERENCE_FLAG", "FIG_COLUMNS",
           "AGGREGATE_COLUMNS", "COMPARISON_COLUMNS"]
