"""Experiment configuration, profiles and JSON loading."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

METHODS = ("pipeline", "baseline", "rl")


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one experiment.

    The first block mirrors the reference protocol; the second block holds
    engineering settings that the protocol leaves open.
    """

    T: int = 1000
    burnin_epochs: int = 6
    test_epochs: int = 8
    trials: int = 24
    lam: float = 2000.0
    I: int = 5
    competitors: int = 5
    exploration_rate: float = 0.12
    training_window_epochs: int = 4
    sigma: float = 0.9
    N: int = 500
    J: int = 24
    J_plus: int = 120
    seed: int = 20240611
    lapse_q: float = 0.0
    methods: tuple[str, ...] = METHODS

    n_action_samples: int = 500
    baseline_eval_budget: int = 8
    value_epochs: int = 40
    n_mc: int = 64

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        positive_int = ("T", "burnin_epochs", "test_epochs", "trials", "I", "competitors",
                        "training_window_epochs", "N", "J", "n_action_samples", "baseline_eval_budget",
                        "value_epochs", "n_mc")
        for name in positive_int:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.J_plus, int) or self.J_plus < 0:
            raise ConfigError(f"J_plus must be a non-negative integer, got {self.J_plus!r}")
        if self.J < 3:
            raise ConfigError("J must be at least 3 so every portfolio source is sampled")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if not 0.0 <= self.exploration_rate <= 1.0:
            raise ConfigError("exploration_rate must lie in [0, 1]")
        if not 0.0 < self.sigma < 1.0:
            raise ConfigError("sigma must lie in (0, 1)")
        if not 0.0 <= self.lapse_q < 1.0:
            raise ConfigError("lapse_q must lie in [0, 1)")
        if self.burnin_epochs < 2:
            raise ConfigError("burnin_epochs must be at least 2 (one random epoch, then the pipeline)")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        d["lambda"] = d.pop("lam")
        return d


PROFILES = {
    "paper": {},
    "desk": {"T": 200, "competitors": 3, "trials": 8, "lam": 400.0, "N": 200, "J_plus": 60},
}


def profile(name: str) -> ExperimentConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return ExperimentConfig(**PROFILES[name])


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def from_dict(d: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay snake_case keys on ``base``; ``lambda`` is accepted for ``lam``."""
    d = dict(d)
    if "lambda" in d:
        if "lam" in d:
            raise ConfigError("give either 'lambda' or 'lam', not both")
        d["lam"] = d.pop("lambda")
    unknown = sorted(set(d) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if "lam" in d and isinstance(d["lam"], (int, float)) and not isinstance(d["lam"], bool):
        d["lam"] = float(d["lam"])
    for key in ("sigma", "exploration_rate", "lapse_q"):
        if key in d and isinstance(d[key], int) and not isinstance(d[key], bool):
            d[key] = float(d[key])
    base = base or ExperimentConfig()
    try:
        return base.replace(**d)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return from_dict(data, base)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


__all__ = ["ExperimentConfig", "ConfigError", "METHODS", "PROFILES", "profile", "from_dict", "load_config",
           "save_config"]
