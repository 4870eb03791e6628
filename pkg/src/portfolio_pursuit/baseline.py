"""Industry-style portfolio modulation.

Quotes from the standard pipeline are multiplied by one bounded factor per
indicator set the customer falls in, pushing prices up for over-supplied
categories and down for under-supplied ones.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model_zoo.models import _interp_rows
from .pipeline import ACTION_CLAMP
from .portfolio import batch_loss

N_GRID = (0.5, 1.0, 2.0)
BETA_GRID = (0.02, 0.05, 0.1, 0.25)


@dataclass(frozen=True)
class BaselineParams:
    n: float = 1.0
    beta: float = 0.02


def default_grid() -> list[BaselineParams]:
    return [BaselineParams(n, b) for n, b in itertools.product(N_GRID, BETA_GRID)]


def historic_frequency(epoch_frequencies: Sequence[Sequence[float]]) -> np.ndarray:
    """Element-wise mean of per-epoch frequency vectors."""
    F = np.asarray(epoch_frequencies, dtype=float)
    if F.size == 0:
        raise ValueError("no unmodulated epochs to average")
    return np.atleast_2d(F).mean(axis=0)


def g(z, p: BaselineParams):
    """Bounded increasing map ``1 + beta (z^n - 1) / (z^n + 1)``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("g is defined for z > 0 only")
    with np.errstate(over="ignore"):
        zn = z**p.n
    ratio = np.where(np.isinf(zn), 1.0, (zn - 1.0) / np.where(np.isinf(zn), 1.0, zn + 1.0))
    out = 1.0 + p.beta * ratio
    return float(out) if out.ndim == 0 else out


def set_factors(f_bar, target, p: BaselineParams) -> np.ndarray:
    return np.atleast_1d(g(np.asarray(f_bar, dtype=float) / np.asarray(target, dtype=float), p))


def modulation_factor(member, f_bar, target, p: BaselineParams) -> float:
    """Product of ``g(f_bar_i / f*_i)`` over the sets containing the customer."""
    member = np.asarray(member, dtype=bool)
    if not member.any():
        return 1.0
    factors = set_factors(f_bar, target, p)
    out = 1.0
    for fi in factors[member]:
        out *= fi
    return float(out)


def modulate(action: float, factor: float) -> float:
    if factor == 1.0:
        return action
    return float(np.clip(action * factor, *ACTION_CLAMP))


def grid_search_params(
    candidate_grid: Sequence[BaselineParams],
    eval_budget: int,
    rng: np.random.Generator,
    *,
    base_actions: np.ndarray,
    costs: np.ndarray,
    markets: np.ndarray,
    members: np.ndarray,
    conversion,
    f_bar,
    target,
    lam: float,
    T: int,
) -> tuple[BaselineParams, list[float]]:
    """Pick the grid point with the best offline mean reward.

    Each of ``eval_budget`` rollouts draws ``T`` customers from the given
    historic pool (costs, true market variables, membership and the
    pipeline's unmodulated action). Acceptance uses the conversion model as
    oracle: profit is the expected ``C p (a - 1)`` and the portfolio is built
    from Bernoulli draws with uniforms shared across grid points. Returns the
    chosen params and the score of every grid point.
    """
    grid = list(candidate_grid)
    if not grid:
        raise ValueError("empty parameter grid")
    members = np.asarray(members, dtype=bool)
    n_pool = len(costs)
    draws = [(rng.integers(n_pool, size=T), rng.random(T)) for _ in range(eval_budget)]
    if hasattr(conversion, "curve"):
        curves = conversion.curve(markets)

        def accept_prob(idx, a):
            return _interp_rows(conversion.grid, curves[idx], a[:, None])[:, 0]
    else:
        def accept_prob(idx, a):
            return np.asarray(conversion(markets[idx], a), dtype=float)

    scores = []
    for params in grid:
        factors = set_factors(f_bar, target, params)
        row_factor = np.where(members, factors[None, :], 1.0).prod(axis=1)
        actions = np.where(row_factor == 1.0, base_actions, np.clip(base_actions * row_factor, *ACTION_CLAMP))
        total = 0.0
        for idx, u in draws:
            a = actions[idx]
            pr = accept_prob(idx, a)
            profit = float((costs[idx] * pr * (a - 1.0)).sum())
            accepted = u < pr
            f = members[idx][accepted].sum(axis=0)
            total += profit - lam * float(batch_loss(f[None, :], target)[0])
        scores.append(total / eval_budget)
    best = int(np.argmax(scores))
    return grid[best], scores
