"""Market, conversion and action models and the routines that fit them."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from ..market_env import OCCUPATIONS, REGIONS, CustomerFeatures, MarketVariables
from .forest import RandomForest, RegressionTree
from .gp import MaternGP
from .mlp import MLP
from .optimize import maximize_rows
from .serialize import register

MIN_ROWS = 50
ACTION_GRID = np.round(np.linspace(0.9, 2.2, 261), 10)  # spacing 0.005
GP_LENGTH_SCALES = (0.3, 0.5, 0.8, 1.2, 2.0)  # leave-one-out candidates; None keeps length_scale

for _cls in (RandomForest, RegressionTree, MLP, MaternGP):
    register(_cls)


class InsufficientDataError(ValueError):
    pass


def encode_customers(customers: Sequence[CustomerFeatures]) -> np.ndarray:
    """One-hot region and occupation followed by the numeric features."""
    n = len(customers)
    X = np.zeros((n, len(REGIONS) + len(OCCUPATIONS) + 5))
    r_idx = {r: i for i, r in enumerate(REGIONS)}
    o_idx = {o: i for i, o in enumerate(OCCUPATIONS)}
    off = len(REGIONS)
    num = off + len(OCCUPATIONS)
    for row, c in enumerate(customers):
        X[row, r_idx[c.region]] = 1.0
        X[row, off + o_idx[c.occupation]] = 1.0
        X[row, num:] = (c.age, c.vehicle_value, c.years_licensed, c.income, c.risk_score)
    return X


def as_market_array(market) -> np.ndarray:
    if isinstance(market, MarketVariables):
        return market.as_array()[None, :]
    if len(market) and isinstance(market[0], MarketVariables):
        return np.array([m.as_array() for m in market])
    return np.atleast_2d(np.asarray(market, dtype=float))


class _Scaler:
    """Training-set standardisation with clamping to the training box."""

    def __init__(self, X=None):
        if X is not None:
            X = np.asarray(X, dtype=float)
            self.lo, self.hi = X.min(axis=0), X.max(axis=0)
            self.mean = X.mean(axis=0)
            sd = X.std(axis=0)
            self.sd = np.where(sd > 0, sd, 1.0)

    def __call__(self, X):
        return (np.clip(X, self.lo, self.hi) - self.mean) / self.sd

    def get_state(self):
        return {"lo": self.lo, "hi": self.hi, "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_state(cls, s):
        sc = cls()
        sc.lo, sc.hi, sc.mean, sc.sd = s["lo"], s["hi"], s["mean"], s["sd"]
        return sc


register(_Scaler)


@register
class MarketModel:
    """Customer features -> (m1, m3, m5), sorted so m1 <= m3 <= m5."""

    def __init__(self, forest: RandomForest, scaler: _Scaler):
        self.forest = forest
        self.scaler = scaler

    def predict_encoded(self, X) -> np.ndarray:
        return np.sort(self.forest.predict(self.scaler(np.atleast_2d(X))), axis=1)

    def predict(self, customers) -> np.ndarray:
        if isinstance(customers, CustomerFeatures):
            customers = [customers]
        return self.predict_encoded(encode_customers(customers))

    def get_state(self):
        return {"forest": self.forest, "scaler": self.scaler}

    @classmethod
    def from_state(cls, s):
        return cls(s["forest"], s["scaler"])


def isotonic_decreasing(Y: np.ndarray) -> np.ndarray:
    """Row-wise L2 projection onto non-increasing sequences.

    Rows that are already non-increasing are returned unchanged; the rest go
    through pool-adjacent-violators.
    """
    Y = np.array(np.atleast_2d(Y), dtype=float)
    bad = np.nonzero((np.diff(Y, axis=1) > 0).any(axis=1))[0]
    for i in bad:
        Y[i] = isotonic_regression(Y[i], increasing=False).x
    return Y


def _interp_rows(grid: np.ndarray, curves: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Linear interpolation of each row's curve at points ``A`` (n, g)."""
    A = np.clip(A, grid[0], grid[-1])
    h = grid[1] - grid[0]
    pos = (A - grid[0]) / h
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, len(grid) - 2)
    w = pos - i0
    rows = np.arange(curves.shape[0])[:, None]
    return (1.0 - w) * curves[rows, i0] + w * curves[rows, i0 + 1]


@register
class ConversionModel:
    """Acceptance probability p(m, a) in [0, 1], non-increasing in a.

    The network's raw output is evaluated on :data:`ACTION_GRID`, projected
    onto non-increasing curves and linearly interpolated in ``a``.
    """

    grid = ACTION_GRID

    def __init__(self, net: MLP, scaler: _Scaler):
        self.net = net
        self.scaler = scaler

    def raw(self, M, a) -> np.ndarray:
        M = as_market_array(M)
        a = np.broadcast_to(np.asarray(a, dtype=float), (M.shape[0],))
        return self.net.predict(self.scaler(np.column_stack([M, a])))

    def curve(self, M) -> np.ndarray:
        M = as_market_array(M)
        n, G = M.shape[0], len(self.grid)
        X = np.column_stack([np.repeat(M, G, axis=0), np.tile(self.grid, n)])
        raw = self.net.predict(self.scaler(X)).reshape(n, G)
        return isotonic_decreasing(raw)

    def prob_fn(self, M) -> Callable[[np.ndarray], np.ndarray]:
        """Probability as a function of an (n, g) action array for fixed rows M."""
        curves = self.curve(M)
        return lambda A: _interp_rows(self.grid, curves, A)

    def predict(self, M, a) -> np.ndarray:
        M = as_market_array(M)
        a = np.broadcast_to(np.asarray(a, dtype=float), (M.shape[0],))
        return self.prob_fn(M)(a[:, None])[:, 0]

    __call__ = predict

    def get_state(self):
        return {"net": self.net, "scaler": self.scaler}

    @classmethod
    def from_state(cls, s):
        return cls(s["net"], s["scaler"])


@register
class ActionModel:
    """Amortised policy: market variables (and optionally k) -> action in [1, 2]."""

    def __init__(self, gp: MaternGP, k_aware: bool):
        self.gp = gp
        self.k_aware = k_aware

    def predict(self, M, k=None) -> np.ndarray:
        M = as_market_array(M)
        if self.k_aware:
            if k is None:
                raise ValueError("k-aware action model needs k")
            k = np.broadcast_to(np.asarray(k, dtype=float), (M.shape[0],))
            X = np.column_stack([M, k])
        else:
            X = M
        return np.clip(self.gp.predict(X), 1.0, 2.0)

    __call__ = predict

    def get_state(self):
        return {"gp": self.gp, "k_aware": self.k_aware}

    @classmethod
    def from_state(cls, s):
        return cls(s["gp"], bool(s["k_aware"]))


def _prob_fn(p, M):
    if hasattr(p, "prob_fn"):
        return p.prob_fn(M)

    def fn(A):
        n, g = A.shape
        return np.asarray(p(np.repeat(M, g, axis=0), A.ravel()), dtype=float).reshape(n, g)

    return fn


def optimize_actions(p, M, k) -> np.ndarray:
    """Row-wise argmax over a in [1, 2] of ``p(m, a) * (a - k)``.

    ``p`` is a :class:`ConversionModel` or any callable ``p(M, a)`` taking
    an (n, 3) market array and an (n,) action array.
    """
    M = as_market_array(M)
    k = np.broadcast_to(np.asarray(k, dtype=float), (M.shape[0],))[:, None]
    prob = _prob_fn(p, M)
    return maximize_rows(lambda A: prob(A) * (A - k), M.shape[0])


def optimize_action(p, m, k: float) -> float:
    return float(optimize_actions(p, m, k)[0])


def fit_market_model(customers, targets, rng: np.random.Generator, **forest_kw) -> MarketModel:
    X = customers if isinstance(customers, np.ndarray) else encode_customers(customers)
    Y = np.asarray(targets, dtype=float)
    if X.shape[0] < MIN_ROWS:
        raise InsufficientDataError(f"market model needs at least {MIN_ROWS} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
        raise InsufficientDataError("market model data contains non-finite values")
    scaler = _Scaler(X)
    params = {"n_estimators": 30, "max_depth": 8, "min_samples_leaf": 5, "max_features": max(1, X.shape[1] // 3)}
    params.update(forest_kw)
    forest = RandomForest(**params).fit(scaler(X), Y, rng)
    return MarketModel(forest, scaler)


def fit_conversion_model(X, y, rng: np.random.Generator, *, hidden=(16, 16), epochs=150,
                         batch_size=64, lr=0.01, weight_decay=1e-4) -> ConversionModel:
    """Fit p from rows ``(m1, m3, m5, a)`` and binary acceptance targets."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < MIN_ROWS:
        raise InsufficientDataError(f"conversion model needs at least {MIN_ROWS} rows, got {X.shape[0]}")
    scaler = _Scaler(X)
    # the action column is bounded by ACTION_GRID, not by the training box, so
    # the net's learned price response extrapolates beyond explored actions
    scaler.lo[3], scaler.hi[3] = ACTION_GRID[0], ACTION_GRID[-1]
    net = MLP(4, hidden, "logistic", weight_decay).init(rng)
    net.fit(scaler(X), y, rng, epochs=epochs, batch_size=batch_size, lr=lr)
    return ConversionModel(net, scaler)


def _sample_rows(M, n, rng):
    if M.shape[0] == 0:
        raise InsufficientDataError("action model needs at least one market sample")
    replace = M.shape[0] < n
    idx = rng.choice(M.shape[0], size=n, replace=replace)
    return M[np.sort(idx)]


def fit_action_model_plain(p, market_samples, rng: np.random.Generator | None = None, n_pairs=500,
                           length_scale=0.3, noise=1e-4, length_scales=GP_LENGTH_SCALES) -> ActionModel:
    """Amortise ``argmax_a p(m, a)(a - 1)`` over sampled market variables."""
    rng = np.random.default_rng(0) if rng is None else rng
    M = _sample_rows(as_market_array(market_samples), n_pairs, rng)
    a_star = optimize_actions(p, M, 1.0)
    gp = MaternGP(length_scale, noise, length_scales).fit(M, a_star)
    model = ActionModel(gp, k_aware=False)
    model.training_ = (M, a_star)
    return model


def fit_action_model_k(p, market_samples, rng: np.random.Generator, n_triples=500, k_loc=1.0, k_scale=0.1,
                       length_scale=0.3, noise=1e-4, length_scales=GP_LENGTH_SCALES) -> ActionModel:
    """Amortise ``argmax_a p(m, a)(a - k)`` with k ~ Laplace(k_loc, k_scale)."""
    M = _sample_rows(as_market_array(market_samples), n_triples, rng)
    k = rng.laplace(k_loc, k_scale, size=n_triples)
    a_star = optimize_actions(p, M, k)
    gp = MaternGP(length_scale, noise, length_scales).fit(np.column_stack([M, k]), a_star)
    model = ActionModel(gp, k_aware=True)
    model.training_ = (M, k, a_star)
    return model
