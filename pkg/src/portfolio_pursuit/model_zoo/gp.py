"""Gaussian-process regression with a fixed Matern-5/2 kernel."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SQRT5 = np.sqrt(5.0)


def matern52(A, B, length_scale):
    d = np.sqrt(np.maximum(
        (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2.0 * A @ B.T, 0.0)) / length_scale
    return (1.0 + SQRT5 * d + 5.0 / 3.0 * d**2) * np.exp(-SQRT5 * d)


class MaternGP:
    """Posterior-mean GP regressor on standardised inputs and targets.

    Hyperparameters are fixed: no marginal-likelihood optimisation. When
    ``candidates`` is given, the length scale is instead picked from that
    list by closed-form leave-one-out error, which is deterministic. Inputs
    outside the training box are clamped onto it before prediction.
    """

    def __init__(self, length_scale=0.3, noise=1e-4, candidates=None):
        self.length_scale = length_scale
        self.noise = noise
        self.candidates = None if candidates is None else tuple(float(c) for c in candidates)

    def _loo_error(self, ls, r):
        K = matern52(self.X_, self.X_, ls)
        K[np.diag_indices_from(K)] += self.noise
        Kinv = cho_solve(cho_factor(K, lower=True), np.eye(len(r)))
        return float(np.mean((Kinv @ r / np.diag(Kinv)) ** 2))

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0:
            raise ValueError("cannot fit a GP to an empty dataset")
        self.x_lo_ = X.min(axis=0)
        self.x_hi_ = X.max(axis=0)
        self.x_mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.x_sd_ = np.where(sd > 0, sd, 1.0)
        self.y_mean_ = float(y.mean())
        ysd = float(y.std())
        self.y_sd_ = ysd if ysd > 1e-12 else 0.0
        self.X_ = (X - self.x_mean_) / self.x_sd_
        if self.y_sd_ == 0.0:
            self.alpha_ = np.zeros(X.shape[0])
            return self
        r = (y - self.y_mean_) / self.y_sd_
        if self.candidates:
            errs = [self._loo_error(ls, r) for ls in self.candidates]
            self.length_scale = self.candidates[int(np.argmin(errs))]
        K = matern52(self.X_, self.X_, self.length_scale)
        K[np.diag_indices_from(K)] += self.noise
        self.alpha_ = cho_solve(cho_factor(K, lower=True), (y - self.y_mean_) / self.y_sd_)
        return self

    def predict(self, X):
        X = np.clip(np.atleast_2d(np.asarray(X, dtype=float)), self.x_lo_, self.x_hi_)
        if self.y_sd_ == 0.0:
            return np.full(X.shape[0], self.y_mean_)
        Z = (X - self.x_mean_) / self.x_sd_
        return self.y_mean_ + self.y_sd_ * (matern52(Z, self.X_, self.length_scale) @ self.alpha_)

    def get_state(self):
        return {k: getattr(self, k) for k in (
            "length_scale", "noise", "x_lo_", "x_hi_", "x_mean_", "x_sd_", "y_mean_", "y_sd_", "X_", "alpha_")}

    @classmethod
    def from_state(cls, state):
        gp = cls(float(state["length_scale"]), float(state["noise"]))
        for k, v in state.items():
            if k.endswith("_"):
                setattr(gp, k, v if isinstance(v, np.ndarray) else float(v))
        return gp
