"""Bagged multi-output regression trees."""

from __future__ import annotations

import numpy as np


class RegressionTree:
    """CART regression tree with variance-reduction splits.

    Targets may be multi-output; the split criterion sums squared error over
    outputs. Nodes are stored in flat arrays so prediction is vectorised.
    """

    def __init__(self, max_depth=8, min_samples_leaf=5, max_features=None):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features

    def fit(self, X, y, rng: np.random.Generator):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        self.n_outputs_ = y.shape[1]
        self._feature, self._threshold, self._left, self._right, self._value = [], [], [], [], []
        self._grow(X, y, 0, rng)
        self.feature_ = np.array(self._feature, dtype=np.int64)
        self.threshold_ = np.array(self._threshold, dtype=float)
        self.left_ = np.array(self._left, dtype=np.int64)
        self.right_ = np.array(self._right, dtype=np.int64)
        self.value_ = np.array(self._value, dtype=float).reshape(-1, self.n_outputs_)
        del self._feature, self._threshold, self._left, self._right, self._value
        self.__dict__.pop("_lists", None)
        return self

    def _new_node(self, y):
        self._feature.append(-1)
        self._threshold.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._value.append(y.mean(axis=0))
        return len(self._feature) - 1

    def _grow(self, X, y, depth, rng):
        node = self._new_node(y)
        n = X.shape[0]
        if depth >= self.max_depth or n < 2 * self.min_samples_leaf:
            return node
        split = self._best_split(X, y, rng)
        if split is None:
            return node
        j, thr = split
        mask = X[:, j] <= thr
        self._feature[node] = j
        self._threshold[node] = thr
        self._left[node] = self._grow(X[mask], y[mask], depth + 1, rng)
        self._right[node] = self._grow(X[~mask], y[~mask], depth + 1, rng)
        return node

    def _best_split(self, X, y, rng):
        n, d = X.shape
        k = d if self.max_features is None else min(self.max_features, d)
        features = rng.choice(d, size=k, replace=False)
        total_sse = ((y - y.mean(axis=0)) ** 2).sum()
        if total_sse <= 1e-12:
            return None
        leaf = self.min_samples_leaf
        best_sse, best = total_sse - 1e-12, None
        for j in features:
            order = np.argsort(X[:, j], kind="mergesort")
            xs = X[order, j]
            ys = y[order]
            csum = np.cumsum(ys, axis=0)
            csq = np.cumsum((ys**2).sum(axis=1))
            n_left = np.arange(1, n)
            left_sse = csq[:-1] - (csum[:-1] ** 2).sum(axis=1) / n_left
            right_sum = csum[-1] - csum[:-1]
            right_sse = (csq[-1] - csq[:-1]) - (right_sum**2).sum(axis=1) / (n - n_left)
            sse = left_sse + right_sse
            valid = (xs[1:] > xs[:-1]) & (n_left >= leaf) & (n - n_left >= leaf)
            if not valid.any():
                continue
            sse = np.where(valid, sse, np.inf)
            i = int(np.argmin(sse))
            if sse[i] < best_sse:
                best_sse = sse[i]
                best = (int(j), 0.5 * (xs[i] + xs[i + 1]))
        return best

    def _predict_small(self, X):
        # scalar traversal; much cheaper than array ops for a handful of rows
        if not hasattr(self, "_lists"):
            self._lists = (self.feature_.tolist(), self.threshold_.tolist(), self.left_.tolist(), self.right_.tolist())
        feat, thr, left, right = self._lists
        leaves = []
        for row in X.tolist():
            node = 0
            while feat[node] >= 0:
                node = left[node] if row[feat[node]] <= thr[node] else right[node]
            leaves.append(node)
        return self.value_[leaves]

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] <= 8:
            return self._predict_small(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature_[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature_[nd]] <= self.threshold_[nd]
            node[idx] = np.where(go_left, self.left_[nd], self.right_[nd])
            active = self.feature_[node] >= 0
        return self.value_[node]

    def get_state(self):
        return {
            "n_outputs": self.n_outputs_,
            "feature": self.feature_,
            "threshold": self.threshold_,
            "left": self.left_,
            "right": self.right_,
            "value": self.value_,
        }

    @classmethod
    def from_state(cls, state):
        tree = cls()
        tree.n_outputs_ = int(state["n_outputs"])
        tree.feature_ = state["feature"]
        tree.threshold_ = state["threshold"]
        tree.left_ = state["left"]
        tree.right_ = state["right"]
        tree.value_ = state["value"].reshape(-1, tree.n_outputs_)
        return tree


class RandomForest:
    """Average of regression trees fitted to bootstrap resamples.

    Parameters
    ----------
    n_estimators : int
        Number of trees.
    max_depth, min_samples_leaf : int
        Per-tree growth limits.
    max_features : int or None
        Features considered per split; ``None`` means all of them.
    """

    def __init__(self, n_estimators=30, max_depth=8, min_samples_leaf=5, max_features=None):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.trees_: list[RegressionTree] = []

    def fit(self, X, y, rng: np.random.Generator):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        if n == 0:
            raise ValueError("cannot fit a forest to an empty dataset")
        self.trees_ = []
        for _ in range(self.n_estimators):
            idx = rng.integers(n, size=n)
            tree = RegressionTree(self.max_depth, self.min_samples_leaf, self.max_features)
            self.trees_.append(tree.fit(X[idx], y[idx], rng))
        return self

    def predict(self, X):
        if not self.trees_:
            raise RuntimeError("forest is not fitted")
        out = self.trees_[0].predict(X)
        for tree in self.trees_[1:]:
            out = out + tree.predict(X)
        return out / len(self.trees_)

    def get_state(self):
        return {
            "params": [self.n_estimators, self.max_depth, self.min_samples_leaf,
                       -1 if self.max_features is None else self.max_features],
            "trees": [t.get_state() for t in self.trees_],
        }

    @classmethod
    def from_state(cls, state):
        n, depth, leaf, mf = (int(v) for v in state["params"])
        forest = cls(n, depth, leaf, None if mf < 0 else mf)
        forest.trees_ = [RegressionTree.from_state(s) for s in state["trees"]]
        return forest
