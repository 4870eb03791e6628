"""Standard industry pricing pipeline: market, conversion and action models.

At inference a customer goes through the market model to estimated market
variables, then through the action model to a price multiplier. A share of
quotes is perturbed for exploration during burn-in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .market_env import CustomerFeatures, InteractionRecord
from .model_zoo import (
    ActionModel,
    ConversionModel,
    InsufficientDataError,
    MarketModel,
    fit_action_model_k,
    fit_action_model_plain,
    fit_conversion_model,
    fit_market_model,
)

EXPLORATION_RATE = 0.12
EXPLORATION_FACTORS = (0.93, 0.95, 0.97, 1.03, 1.05, 1.07)
ACTION_CLAMP = (0.9, 2.2)

__all__ = [
    "InteractionRecord",
    "PipelineModels",
    "Explorer",
    "train_pipeline",
    "quote_price",
    "random_policy_quote",
    "training_window",
    "EXPLORATION_RATE",
    "EXPLORATION_FACTORS",
    "ACTION_CLAMP",
]


@dataclass(frozen=True)
class PipelineModels:
    market: MarketModel
    conversion: ConversionModel
    action: ActionModel
    action_k: ActionModel | None = None


@dataclass(frozen=True)
class Explorer:
    """Exploration settings. Draws two uniforms per quote whether or not it explores."""

    rate: float = EXPLORATION_RATE
    factors: tuple[float, ...] = EXPLORATION_FACTORS

    def factor(self, rng: np.random.Generator) -> float:
        u = rng.random(2)
        if u[0] < self.rate:
            return self.factors[min(int(u[1] * len(self.factors)), len(self.factors) - 1)]
        return 1.0


def training_window(history: Sequence[InteractionRecord], window: int) -> list[InteractionRecord]:
    """Records from the last ``window`` epochs present in ``history``."""
    epochs = sorted({r.epoch for r in history})
    keep = set(epochs[-window:])
    return [r for r in history if r.epoch in keep]


def train_pipeline(
    history: Sequence[InteractionRecord],
    window: int,
    rng: np.random.Generator,
    *,
    k_aware: bool = False,
    n_action_samples: int = 500,
) -> PipelineModels:
    """Fit M, p and pi on the trailing ``window`` epochs of ``history``.

    With ``k_aware`` the k-conditioned action model is fitted as well, from
    its own child generator so the shared models do not depend on the flag.
    """
    if not history:
        raise InsufficientDataError("no history to train on")
    rows = training_window(history, window)
    m_rng, p_rng, a_rng, k_rng = rng.spawn(4)
    M = np.array([r.market.as_array() for r in rows])
    try:
        market = fit_market_model([r.customer for r in rows], M, m_rng)
    except InsufficientDataError as e:
        raise InsufficientDataError(f"market model: {e}") from None
    X = np.column_stack([M, [r.action for r in rows]])
    y = np.array([float(r.accepted) for r in rows])
    try:
        conversion = fit_conversion_model(X, y, p_rng)
    except InsufficientDataError as e:
        raise InsufficientDataError(f"conversion model: {e}") from None
    action = fit_action_model_plain(conversion, M, a_rng, n_pairs=n_action_samples)
    action_k = fit_action_model_k(conversion, M, k_rng, n_triples=n_action_samples) if k_aware else None
    return PipelineModels(market, conversion, action, action_k)


def base_action(models: PipelineModels, c: CustomerFeatures) -> float:
    m = models.market.predict(c)
    return float(models.action.predict(m)[0])


def quote_price(
    models: PipelineModels,
    c: CustomerFeatures,
    cost: float,
    rng: np.random.Generator | None = None,
    explore: bool = False,
    explorer: Explorer = Explorer(),
) -> tuple[float, float]:
    """Return ``(action, price)`` for one customer."""
    a = base_action(models, c)
    if explore:
        a = float(np.clip(a * explorer.factor(rng), *ACTION_CLAMP))
    return a, cost * a


def random_policy_quote(cost: float, rng: np.random.Generator, low: float = 1.0, high: float = 1.2) -> tuple[float, float]:
    a = float(rng.uniform(low, high))
    return a, cost * a
