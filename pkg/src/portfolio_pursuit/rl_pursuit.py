"""Portfolio pursuit by backward fitted value iteration.

The value of a portfolio (as a frequency vector) at step t is learned by
sweeping t = T..1: a linear next-step model ``U`` stands in for the values at
t + 1, k-values derived from ``U`` drive the k-aware action model, and the
resulting one-step value estimates are refitted into ``U``. Estimates from all
steps are recentred per step and finally fitted by a small network ``V``
that is used at quote time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .market_env import CustomerFeatures, InteractionRecord
from .model_zoo import MLP, as_market_array, register
from .model_zoo.models import _prob_fn
from .portfolio import IndicatorSet, batch_loss, membership

K_CLIP = (0.5, 1.5)


# --------------------------------------------------------------------------
# value models


@register
class LinearValue:
    """Next-step value model ``U(f) = w . f + b``."""

    def __init__(self, weights, bias: float):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = float(bias)

    def __call__(self, F) -> np.ndarray:
        return np.asarray(F, dtype=float) @ self.weights + self.bias

    @classmethod
    def fit(cls, F, V, ridge: float = 1e-6) -> "LinearValue":
        """Ridge-regularised least squares; the bias is not penalised."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        V = np.asarray(V, dtype=float)
        X = np.column_stack([F, np.ones(F.shape[0])])
        R = ridge * np.eye(X.shape[1])
        R[-1, -1] = 0.0
        coef = np.linalg.solve(X.T @ X + R, X.T @ V)
        return cls(coef[:-1], coef[-1])

    def get_state(self):
        return {"weights": self.weights, "bias": self.bias}

    @classmethod
    def from_state(cls, s):
        return cls(s["weights"], s["bias"])


@register
class TerminalValue:
    """Boundary condition ``U(f) = -lambda * loss(f, f*)``."""

    def __init__(self, target, lam: float):
        self.target = np.asarray(target)
        self.lam = float(lam)

    def __call__(self, F) -> np.ndarray:
        return -self.lam * batch_loss(np.asarray(F, dtype=float), self.target)

    def get_state(self):
        return {"target": self.target, "lam": self.lam}

    @classmethod
    def from_state(cls, s):
        return cls(s["target"], s["lam"])


@register
class ValueFn:
    """Network value ``V(f, t)`` over scaled inputs ``(f / T, t / T)``.

    Targets are centred by ``offset`` and divided by ``scale`` before fitting.
    Constant targets give ``scale = 0`` and an exactly constant function.
    """

    def __init__(self, net: MLP, T: int, scale: float, offset: float = 0.0):
        self.net = net
        self.T = int(T)
        self.scale = float(scale)
        self.offset = float(offset)

    def __call__(self, F, t) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if self.scale == 0.0:
            return np.full(F.shape[0], self.offset)
        t = np.broadcast_to(np.asarray(t, dtype=float), (F.shape[0],))
        X = np.column_stack([F / self.T, t / self.T])
        return self.offset + self.scale * self.net.predict(X)

    @classmethod
    def fit(cls, F, t, V, T: int, rng: np.random.Generator, *, hidden=(32, 32), epochs=40,
            batch_size=256, lr=3e-3) -> "ValueFn":
        F = np.asarray(F, dtype=float)
        V = np.asarray(V, dtype=float)
        offset = float(V.mean())
        scale = float(V.std())
        net = MLP(F.shape[1] + 1, hidden, "linear").init(rng)
        if scale < 1e-12:
            return cls(net, T, 0.0, offset)
        X = np.column_stack([F / T, np.asarray(t, dtype=float) / T])
        net.fit(X, (V - offset) / scale, rng, epochs=epochs, batch_size=batch_size, lr=lr)
        return cls(net, T, scale, offset)

    def get_state(self):
        return {"net": self.net, "T": self.T, "scale": self.scale, "offset": self.offset}

    @classmethod
    def from_state(cls, s):
        return cls(s["net"], int(s["T"]), float(s["scale"]), float(s.get("offset", 0.0)))


@register
class HorizonValue:
    """``V(f, t)`` from a fitted network for ``t <= T`` and the exact boundary after.

    The network only sees steps 1..T; the last quote reads step ``T + 1``,
    which is the terminal value itself.
    """

    def __init__(self, value_fn: Callable, terminal: TerminalValue, T: int):
        self.value_fn = value_fn
        self.terminal = terminal
        self.T = int(T)

    def __call__(self, F, t) -> np.ndarray:
        F = np.atleast_2d(np.asarray(F, dtype=float))
        if t > self.T:
            return self.terminal(F)
        return self.value_fn(F, t)

    def get_state(self):
        return {"value_fn": self.value_fn, "terminal": self.terminal, "T": self.T}

    @classmethod
    def from_state(cls, s):
        return cls(s["value_fn"], s["terminal"], int(s["T"]))


# --------------------------------------------------------------------------
# k-values


def k_values(U: Callable, F, member, cost) -> np.ndarray:
    """Vectorised ``1 - (U(f + member) - U(f)) / cost`` over matching rows."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    member = np.atleast_2d(np.asarray(member, dtype=float))
    return 1.0 - (U(F + member) - U(F)) / np.asarray(cost, dtype=float)


def k_value(U: Callable, f, member, cost: float) -> float:
    if cost <= 0:
        raise ValueError("cost must be positive")
    return float(k_values(U, f, member, cost)[0])


def k_value_inference(V: Callable, f, member, cost: float, t: int) -> float:
    """k-value at quote time: the value difference is read at step ``t + 1``."""
    if cost <= 0:
        raise ValueError("cost must be positive")
    return float(k_values(lambda F: V(F, t + 1), f, member, cost)[0])


# --------------------------------------------------------------------------
# portfolio samplers


@dataclass(frozen=True)
class SamplerConfig:
    """Rates for the three portfolio sources.

    ``p_bar`` are historic per-step acceptance rates per set, ``p_star`` the
    target rates, ``sigma`` the high-coverage slope parameter.
    """

    p_bar: np.ndarray
    p_star: np.ndarray
    T: int
    sigma: float = 0.9
    ratio: tuple[int, int, int] = (1, 1, 2)

    @property
    def p_max(self) -> np.ndarray:
        return (1.0 + self.sigma) * np.maximum(self.p_star, self.p_bar)

    @property
    def p_min(self) -> np.ndarray:
        return (1.0 - self.sigma) * np.minimum(self.p_star, self.p_bar)

    @classmethod
    def from_frequencies(cls, f_bar, f_star, T: int, sigma: float = 0.9) -> "SamplerConfig":
        return cls(np.asarray(f_bar, dtype=float) / T, np.asarray(f_star, dtype=float) / T, T, sigma)


def _check_t(t, T):
    if not 1 <= t <= T:
        raise ValueError(f"t must lie in [1, {T}], got {t}")


def sample_previously_on_policy(p_bar, t: int, T: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    _check_t(t, T)
    rate = np.minimum(1.0, np.asarray(p_bar, dtype=float) + 1.0 / T)
    shape = rate.shape if size is None else (size,) + rate.shape
    return rng.binomial(t, np.broadcast_to(rate, shape))


def sample_target_on_policy(p_star, t: int, T: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    _check_t(t, T)
    rate = np.minimum(1.0, np.asarray(p_star, dtype=float))
    shape = rate.shape if size is None else (size,) + rate.shape
    return rng.binomial(t, np.broadcast_to(rate, shape))


def high_coverage_means(cfg: SamplerConfig, t: int, count: int) -> np.ndarray:
    """Expected high-coverage frequency vectors, one row per omega point."""
    omega = np.linspace(0.0, 1.0, count)[:, None]
    p_hi = np.clip(cfg.p_max, 0.0, 1.0)
    p_lo = np.clip(cfg.p_min, 0.0, 1.0)
    return t * (omega * p_hi + (1.0 - omega) * p_lo)


def sample_high_coverage(cfg: SamplerConfig, t: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 2:
        raise ValueError("high-coverage sampling needs at least two omega points")
    f = high_coverage_means(cfg, t, count)
    base = np.floor(f)
    return (base + (rng.random(f.shape) < (f - base))).astype(np.int64)


def split_counts(J: int, ratio=(1, 1, 2)) -> tuple[int, int, int]:
    """Per-source counts in the given ratio, rounded so they sum to ``J``."""
    total = sum(ratio)
    raw = [J * r / total for r in ratio]
    counts = [int(np.floor(x)) for x in raw]
    order = np.argsort([-(x - c) for x, c in zip(raw, counts)], kind="stable")
    for i in order[: J - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


def sample_portfolios(cfg: SamplerConfig, t: int, J: int, rng: np.random.Generator) -> np.ndarray:
    n_prev, n_target, n_cover = split_counts(J, cfg.ratio)
    parts = [
        sample_previously_on_policy(cfg.p_bar, t, cfg.T, rng, size=n_prev),
        sample_target_on_policy(cfg.p_star, t, cfg.T, rng, size=n_target),
    ]
    if n_cover == 1:
        parts.append(sample_high_coverage(cfg, t, 2, rng)[rng.integers(2)][None, :])
    elif n_cover > 1:
        parts.append(sample_high_coverage(cfg, t, n_cover, rng))
    return np.concatenate(parts, axis=0).astype(np.int64)


# --------------------------------------------------------------------------
# replay buffer


@dataclass
class CustomerReplayBuffer:
    """Historic customers as (cost, market variables, set membership)."""

    costs: np.ndarray
    markets: np.ndarray
    members: np.ndarray
    customers: list[CustomerFeatures] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=float)
        self.markets = as_market_array(self.markets)
        self.members = np.atleast_2d(np.asarray(self.members, dtype=float))
        if len(self.costs) == 0:
            raise ValueError("replay buffer is empty")

    def __len__(self):
        return len(self.costs)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(len(self.costs), size=n)

    @classmethod
    def from_records(cls, records: Sequence[InteractionRecord], sets: Sequence[IndicatorSet]) -> "CustomerReplayBuffer":
        return cls(
            costs=np.array([r.cost for r in records]),
            markets=np.array([r.market.as_array() for r in records]),
            members=np.array([membership(sets, r.customer) for r in records]),
            customers=[r.customer for r in records],
        )


# --------------------------------------------------------------------------
# one backward step


class TabulatedPolicy:
    """A k-aware policy evaluated once per buffer row on a grid of k.

    Lookups interpolate linearly in k. The grid must cover every k the
    policy will be asked about, so it is paired with k clipping.
    """

    def __init__(self, policy: Callable, markets, k_grid):
        self.k_grid = np.asarray(k_grid, dtype=float)
        M = as_market_array(markets)
        n, G = M.shape[0], len(self.k_grid)
        self.table = np.asarray(policy(np.repeat(M, G, axis=0), np.tile(self.k_grid, n)), dtype=float).reshape(n, G)

    def lookup(self, idx: np.ndarray, k: np.ndarray) -> np.ndarray:
        """Actions for buffer rows ``idx`` (N,) at k-values ``k`` (J, N)."""
        g = self.k_grid
        if k.min() < g[0] - 1e-12 or k.max() > g[-1] + 1e-12:
            raise ValueError("k outside the tabulated range")
        pos = (np.clip(k, g[0], g[-1]) - g[0]) / (g[1] - g[0])
        i0 = np.clip(np.floor(pos).astype(np.int64), 0, len(g) - 2)
        w = pos - i0
        rows = self.table[idx]  # (N, G)
        cols = np.arange(len(idx))[None, :]
        return (1.0 - w) * rows[cols, i0] + w * rows[cols, i0 + 1]


def value_estimates(U: Callable, policy: Callable, conversion, buffer: CustomerReplayBuffer, F,
                    idx: np.ndarray, k_clip=K_CLIP) -> np.ndarray:
    """One-step value estimates for the portfolios ``F`` (J, I).

    Every portfolio is evaluated on the same buffer rows ``idx``. The policy
    sees k clipped to ``k_clip``; the value term uses the unclipped k.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    J, N = F.shape[0], len(idx)
    cost = buffer.costs[idx]
    M = buffer.markets[idx]
    mem = buffer.members[idx]
    u_f = U(F)
    u_plus = U((F[:, None, :] + mem[None, :, :]).reshape(J * N, -1)).reshape(J, N)
    k = 1.0 - (u_plus - u_f[:, None]) / cost[None, :]
    return u_f + _mean_profit_term(policy, conversion, M, cost, k, k_clip, idx)


def _mean_profit_term(policy, conversion, M, cost, k, k_clip, idx):
    """Mean over buffer rows of ``C p(m, a) (a - k)`` for a (J, N) array of k."""
    J, N = k.shape
    k_pol = k if k_clip is None else np.clip(k, *k_clip)
    if isinstance(policy, TabulatedPolicy):
        a = policy.lookup(idx, k_pol)
    else:
        a = np.asarray(policy(np.tile(M, (J, 1)), k_pol.reshape(-1)), dtype=float).reshape(J, N)
    prob = _prob_fn(conversion, M)(a.T).T
    return (cost[None, :] * prob * (a - k)).mean(axis=1)


# --------------------------------------------------------------------------
# customers leaving (lapse) extension


@dataclass(frozen=True)
class LapseModel:
    """Each portfolio customer independently leaves with probability ``q`` per step."""

    q: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.q < 1.0:
            raise ValueError("lapse probability must lie in [0, 1)")

    def thin(self, F, n_mc: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Monte-Carlo thinned copies of ``F`` plus a stay indicator for one new customer.

        Returns ``(F_thin, stay)`` with shapes ``(n_mc,) + F.shape`` and
        ``(n_mc,)``. Thinning ``f + member`` is ``F_thin + stay * member``,
        which couples both expectations through common random numbers.
        """
        F = np.asarray(F, dtype=np.int64)
        keep = 1.0 - self.q
        F_thin = rng.binomial(np.broadcast_to(F, (n_mc,) + F.shape), keep)
        stay = (rng.random(n_mc) < keep).astype(float)
        return F_thin.astype(float), stay


def _k_leaving(value_at: Callable, F, mem, cost, lapse: LapseModel, n_mc: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """k-values under thinning for portfolios F (J, I) and customers mem (N, I).

    Returns ``(k, expected_value)`` with shapes (J, N) and (J,).
    """
    F = np.atleast_2d(np.asarray(F))
    mem = np.atleast_2d(np.asarray(mem, dtype=float))
    J, I = F.shape
    N = mem.shape[0]
    F_thin, stay = lapse.thin(F, n_mc, rng)  # (S, J, I), (S,)
    v_base = value_at(F_thin.reshape(-1, I)).reshape(n_mc, J)
    plus = F_thin[:, :, None, :] + stay[:, None, None, None] * mem[None, None, :, :]
    v_plus = value_at(plus.reshape(-1, I)).reshape(n_mc, J, N)
    e_base = v_base.mean(axis=0)
    k = 1.0 - (v_plus.mean(axis=0) - e_base[:, None]) / np.asarray(cost, dtype=float)[None, :]
    return k, e_base


def k_value_leaving(V: Callable, f, member, cost: float, t: int, lapse: LapseModel, n_mc: int,
                    rng: np.random.Generator) -> float:
    """Quote-time k-value when customers may leave, read at step ``t + 1``."""
    if cost <= 0:
        raise ValueError("cost must be positive")
    k, _ = _k_leaving(lambda F: V(F, t + 1), f, member, np.array([cost]), lapse, n_mc, rng)
    return float(k[0, 0])


def value_recursion_leaving(U: Callable, policy: Callable, conversion, buffer: CustomerReplayBuffer, F,
                            idx: np.ndarray, lapse: LapseModel, n_mc: int, rng: np.random.Generator,
                            k_clip=K_CLIP) -> np.ndarray:
    """One-step value estimates with the expected next-step value under thinning."""
    F = np.atleast_2d(np.asarray(F))
    cost = buffer.costs[idx]
    k, e_next = _k_leaving(U, F, buffer.members[idx], cost, lapse, n_mc, rng)
    return e_next + _mean_profit_term(policy, conversion, buffer.markets[idx], cost, k, k_clip, idx)


# --------------------------------------------------------------------------
# Algorithm: backward sweep


@dataclass
class ValueEstimateDataset:
    t: np.ndarray
    F: np.ndarray
    v_raw: np.ndarray
    v_centred: np.ndarray

    def per_t_means(self) -> dict[int, float]:
        return {int(s): float(self.v_centred[self.t == s].mean()) for s in np.unique(self.t)}

    def to_csv(self, path: str | Path) -> None:
        I = self.F.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"f_{i + 1}" for i in range(I)] + ["v_raw", "v_centred"])
            for t, f, v, c in zip(self.t, self.F, self.v_raw, self.v_centred):
                w.writerow([int(t)] + [int(x) for x in f] + [repr(float(v)), repr(float(c))])


@dataclass
class ValueTraining:
    value_fn: ValueFn | None
    dataset: ValueEstimateDataset
    next_step: list = field(default_factory=list, repr=False)  # U after each refit, t = T..1


def train_value_function(
    policy: Callable,
    conversion,
    buffer: CustomerReplayBuffer,
    target,
    lam: float,
    T: int,
    cfg: SamplerConfig | None,
    rng: np.random.Generator,
    *,
    N: int = 500,
    J: int = 24,
    J_plus: int = 120,
    ridge: float = 1e-6,
    k_clip=K_CLIP,
    lapse: LapseModel | None = None,
    n_mc: int = 64,
    fit_next: Callable | None = None,
    sampler: Callable | None = None,
    augment_sampler: Callable | None = None,
    draw: Callable | None = None,
    fit_value: bool = True,
    value_kw: dict | None = None,
    tabulate_k: int = 0,
) -> ValueTraining:
    """Backward fitted value iteration followed by a fit of ``V(f, t)``.

    Parameters
    ----------
    policy : callable
        ``policy(M, k) -> a`` for (n, 3) market rows and (n,) k-values.
    conversion : ConversionModel or callable
        Acceptance probability ``p(M, a)``.
    buffer : CustomerReplayBuffer
        Historic customers; ``N`` rows are drawn per step, shared by all
        portfolios of that step.
    target, lam : array, float
        Target frequency vector and loss coefficient for the boundary value.
    cfg : SamplerConfig
        Portfolio sampling rates; unused when both samplers are given.
    fit_next, sampler, augment_sampler, draw : callable, optional
        Replace the linear next-step model, the portfolio samplers
        ``(t, count, rng) -> F`` and the buffer draw ``(rng) -> indices``.
        Defaults follow the reference protocol.
    tabulate_k : int
        If positive, evaluate ``policy`` once on every buffer row at this
        many evenly spaced k in ``k_clip`` and interpolate afterwards.
    """
    if tabulate_k:
        if k_clip is None:
            raise ValueError("tabulating the policy needs a k clip range")
        policy = TabulatedPolicy(policy, buffer.markets, np.linspace(k_clip[0], k_clip[1], tabulate_k))
    fit_next = fit_next or (lambda F, V: LinearValue.fit(F, V, ridge))
    sampler = sampler or (lambda t, n, g: sample_portfolios(cfg, t, n, g))
    augment_sampler = augment_sampler or sampler
    draw = draw or (lambda g: buffer.draw(N, g))

    U: Callable = TerminalValue(target, lam)
    rows_t, rows_F, rows_v, rows_c = [], [], [], []
    history = []
    for t in range(T, 0, -1):
        F = np.asarray(sampler(t, J, rng))
        idx = draw(rng)
        if lapse is None:
            V = value_estimates(U, policy, conversion, buffer, F, idx, k_clip)
        else:
            V = value_recursion_leaving(U, policy, conversion, buffer, F, idx, lapse, n_mc, rng, k_clip)
        U = fit_next(F, V)
        history.append(U)
        F_plus = np.asarray(augment_sampler(t, J_plus, rng)) if J_plus > 0 else np.zeros((0, F.shape[1]))
        F_t = np.concatenate([F, F_plus], axis=0)
        V_t = np.concatenate([V, U(F_plus) if len(F_plus) else np.zeros(0)])
        rows_t.append(np.full(len(V_t), t))
        rows_F.append(F_t)
        rows_v.append(V_t)
        rows_c.append(V_t - V_t.mean())
    data = ValueEstimateDataset(
        t=np.concatenate(rows_t),
        F=np.concatenate(rows_F, axis=0).astype(np.int64),
        v_raw=np.concatenate(rows_v),
        v_centred=np.concatenate(rows_c),
    )
    value_fn = None
    if fit_value:
        value_fn = ValueFn.fit(data.F, data.t, data.v_centred, T, rng, **(value_kw or {}))
    return ValueTraining(value_fn, data, history)


# --------------------------------------------------------------------------
# quoting


def quote_price_rl(models, V: Callable, f, t: int, c: CustomerFeatures, cost: float,
                   sets: Sequence[IndicatorSet], k_clip=K_CLIP) -> tuple[float, float, float]:
    """Return ``(action, price, k)`` for one customer at step ``t``."""
    if models.action_k is None:
        raise ValueError("pipeline has no k-aware action model")
    k = k_value_inference(V, f, membership(sets, c), cost, t)
    k = float(np.clip(k, *k_clip))
    m = models.market.predict(c)
    a = float(np.clip(models.action_k.predict(m, k)[0], 1.0, 2.0))
    return a, cost * a, k
