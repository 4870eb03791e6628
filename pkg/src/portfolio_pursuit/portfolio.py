"""Indicator sets, frequency representations, the portfolio loss and targets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .market_env import (
    CATEGORICAL_FEATURES,
    NUMERIC_FEATURES,
    OCCUPATIONS,
    REGIONS,
    CustomerFeatures,
    MarketConfig,
    sample_customer,
)

_CATEGORY_VALUES = {"region": REGIONS, "occupation": OCCUPATIONS}


@dataclass(frozen=True)
class IndicatorSet:
    """Membership predicate over one customer feature.

    Numeric features use the closed interval ``[low, high]``; categorical
    features use the value set ``values``.
    """

    feature: str
    low: float | None = None
    high: float | None = None
    values: tuple[str, ...] | None = None

    def contains(self, c: CustomerFeatures) -> bool:
        x = getattr(c, self.feature)
        if self.values is not None:
            return x in self.values
        return self.low <= x <= self.high

    def to_dict(self) -> dict:
        if self.values is not None:
            return {"feature": self.feature, "values": list(self.values)}
        return {"feature": self.feature, "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "IndicatorSet":
        if "values" in d:
            return cls(d["feature"], values=tuple(d["values"]))
        return cls(d["feature"], low=float(d["low"]), high=float(d["high"]))


def membership(sets: Sequence[IndicatorSet], c: CustomerFeatures) -> np.ndarray:
    return np.array([s.contains(c) for s in sets], dtype=bool)


def add_customer(f: np.ndarray, member: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    member = np.asarray(member)
    if f.shape != member.shape:
        raise ValueError("frequency vector and membership lengths differ")
    return f + member.astype(f.dtype)


def loss(f, target) -> float:
    """Mean over sets of ``|f_i - f*_i| / max(f_i, f*_i)``; a 0/0 term counts as 0."""
    return float(np.mean(loss_terms(f, target)))


def loss_terms(f, target) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    target = np.asarray(target, dtype=float)
    denom = np.maximum(f, target)
    num = np.abs(f - target)
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, num / safe, 0.0)


def batch_loss(F: np.ndarray, target) -> np.ndarray:
    """Row-wise loss for a stack of frequency vectors ``F`` of shape (n, I)."""
    return loss_terms(np.atleast_2d(F), np.asarray(target)[None, :]).mean(axis=1)


def generate_target(hist_freq, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Target counts from historic counts.

    Returns the indices of sets that took the halving branch and the target.
    Sets with historic count at most 10 are doubled (rounded up); larger ones
    are doubled or halved (rounded down) on a fair coin. Targets are at
    least 1.
    """
    hist = np.asarray(hist_freq, dtype=float)
    coins = rng.random(hist.shape[0])  # one draw per set, used or not
    target = np.empty(hist.shape[0], dtype=np.int64)
    halved = []
    for i, (fb, u) in enumerate(zip(hist, coins)):
        if fb > 10 and u < 0.5:
            target[i] = math.floor(fb / 2)
            halved.append(i)
        else:
            target[i] = math.ceil(2 * fb)
    return np.array(halved, dtype=np.int64), np.maximum(target, 1)


FEATURES = NUMERIC_FEATURES + CATEGORICAL_FEATURES


def generate_indicator_sets(
    rng: np.random.Generator,
    n_sets: int = 5,
    *,
    n_reference: int = 20000,
    min_mass: float = 0.15,
    config: MarketConfig | None = None,
) -> list[IndicatorSet]:
    """Random indicator sets over ``n_sets`` distinct customer features.

    Numeric sets are intervals between two random quantiles of the feature's
    marginal (estimated from ``n_reference`` generated customers), at least
    ``min_mass`` apart. Categorical sets are random nonempty proper subsets.
    """
    if n_sets > len(FEATURES):
        raise ValueError(f"at most {len(FEATURES)} distinct features available")
    ref_rng = np.random.default_rng(rng.integers(2**63))
    ref = [sample_customer(ref_rng, i, config).features for i in range(n_reference)]
    chosen = rng.choice(len(FEATURES), size=n_sets, replace=False)
    sets = []
    for idx in chosen:
        name = FEATURES[idx]
        if name in _CATEGORY_VALUES:
            values = _CATEGORY_VALUES[name]
            k = int(rng.integers(1, len(values)))
            picked = sorted(rng.choice(len(values), size=k, replace=False))
            sets.append(IndicatorSet(name, values=tuple(values[j] for j in picked)))
        else:
            x = np.array([getattr(c, name) for c in ref])
            q_lo = rng.uniform(0.0, 1.0 - min_mass)
            q_hi = rng.uniform(q_lo + min_mass, 1.0)
            lo, hi = np.quantile(x, [q_lo, q_hi])
            sets.append(IndicatorSet(name, low=float(lo), high=float(hi)))
    return sets
