"""Small fully connected network trained with mini-batch Adam."""

from __future__ import annotations

import numpy as np


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _log_sigmoid(z):
    return -_softplus(-z)


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


_ACTIVATIONS = {
    # name: (f, f' expressed through the pre-activation z)
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "softplus": (_softplus, _expit),
}


class MLP:
    """Feed-forward network with smooth hidden activations.

    Softplus units (the default) make the output extrapolate linearly
    outside the training inputs instead of saturating.

    ``output="logistic"`` gives a sigmoid output trained on mean log-loss;
    ``output="linear"`` gives an identity output trained on mean squared
    error (halved).
    """

    def __init__(self, n_inputs, hidden=(16, 16), output="logistic", weight_decay=0.0, activation="softplus"):
        if output not in ("logistic", "linear"):
            raise ValueError(f"unknown output {output!r}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.output = output
        self.weight_decay = weight_decay
        self.params: list[np.ndarray] = []

    def init(self, rng: np.random.Generator):
        sizes = (self.n_inputs,) + self.hidden + (1,)
        self.params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.params.append(rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))
        return self

    def _forward(self, X, params):
        """Return (activations, pre-activations) layer by layer."""
        f = _ACTIVATIONS[self.activation][0]
        acts, pres = [X], []
        h = X
        n_layers = len(params) // 2
        for i in range(n_layers):
            z = h @ params[2 * i] + params[2 * i + 1]
            pres.append(z)
            h = f(z) if i < n_layers - 1 else z
            acts.append(h)
        return acts, pres

    def raw(self, X):
        """Pre-activation output (logit for the logistic head)."""
        return self._forward(np.asarray(X, dtype=float), self.params)[0][-1][:, 0]

    def predict(self, X):
        z = self.raw(X)
        if self.output == "logistic":
            return _expit(z)
        return z

    def loss(self, X, y, params=None):
        params = self.params if params is None else params
        z = self._forward(np.asarray(X, dtype=float), params)[0][-1][:, 0]
        y = np.asarray(y, dtype=float)
        if self.output == "logistic":
            data = -np.mean(y * _log_sigmoid(z) + (1.0 - y) * _log_sigmoid(-z))
        else:
            data = 0.5 * np.mean((z - y) ** 2)
        reg = 0.5 * self.weight_decay * sum(np.sum(W**2) for W in params[::2])
        return data + reg

    def gradient(self, X, y, params=None):
        """Exact gradient of :meth:`loss` with respect to every parameter."""
        params = self.params if params is None else params
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        acts, pres = self._forward(X, params)
        dfn = _ACTIVATIONS[self.activation][1]
        z = acts[-1][:, 0]
        n = X.shape[0]
        if self.output == "logistic":
            delta = (_expit(z) - y) / n
        else:
            delta = (z - y) / n
        delta = delta[:, None]
        grads = [None] * len(params)
        n_layers = len(params) // 2
        for i in reversed(range(n_layers)):
            W = params[2 * i]
            grads[2 * i] = acts[i].T @ delta + self.weight_decay * W
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ W.T) * dfn(pres[i - 1])
        return grads

    def fit(self, X, y, rng, epochs=200, batch_size=64, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not self.params:
            self.init(rng)
        m = [np.zeros_like(p) for p in self.params]
        v = [np.zeros_like(p) for p in self.params]
        n = X.shape[0]
        step = 0
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                grads = self.gradient(X[idx], y[idx])
                step += 1
                c1 = 1.0 - beta1**step
                c2 = 1.0 - beta2**step
                for p, g, mi, vi in zip(self.params, grads, m, v):
                    mi *= beta1
                    mi += (1.0 - beta1) * g
                    vi *= beta2
                    vi += (1.0 - beta2) * g * g
                    p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
        return self

    def get_state(self):
        return {
            "n_inputs": self.n_inputs,
            "hidden": list(self.hidden),
            "output": self.output,
            "weight_decay": self.weight_decay,
            "activation": self.activation,
            "params": list(self.params),
        }

    @classmethod
    def from_state(cls, state):
        net = cls(int(state["n_inputs"]), tuple(int(h) for h in state["hidden"]), state["output"],
                  float(state["weight_decay"]), state["activation"])
        net.params = [np.asarray(p, dtype=float) for p in state["params"]]
        return net
