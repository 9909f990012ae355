"""Regression trees and the ensembles built on them (forest, AdaBoost.R2,
bagged gradient boosting).  Everything is written against plain numpy so
split criteria and combination rules stay inspectable.
"""

from __future__ import annotations

import numpy as np

from ..errors import HierfcstError


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None):
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.value = value

    @property
    def is_leaf(self):
        return self.feature is None


class RegressionTree:
    """Binary tree with weighted variance-reduction splits.

    Row-permutation invariant: split candidates are scanned in sorted value
    order per feature and ties resolve to the lowest feature index, never to
    input ordering.  min_leaf applies to the sample count on each side.
    """

    def __init__(self, max_depth: int = 6, min_leaf: int = 2,
                 max_features: float | None = None, rng=None):
        if max_depth < 0:
            raise HierfcstError("max_depth must be >= 0")
        if min_leaf < 1:
            raise HierfcstError("min_leaf must be >= 1")
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng
        self.root = None

    def fit(self, X, y, sample_weight=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise HierfcstError("X and y must share a positive row count")
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, float)
        if np.any(w < 0) or w.sum() <= 0:
            raise HierfcstError("sample weights must be non-negative with positive sum")
        self.n_features = X.shape[1]
        self.root = self._grow(X, y, w, depth=0)
        return self

    def _leaf(self, y, w):
        return _Node(value=float(np.average(y, weights=w)))

    def _candidate_features(self, k):
        if self.max_features is None or self.max_features >= 1.0 or self.rng is None:
            return range(k)
        m = max(1, int(round(self.max_features * k)))
        return sorted(self.rng.choice(k, size=m, replace=False).tolist())

    def _grow(self, X, y, w, depth):
        n = y.shape[0]
        if depth >= self.max_depth or n < 2 * self.min_leaf or np.ptp(y) == 0.0:
            return self._leaf(y, w)

        best_gain = 0.0
        best = None
        w_total = w.sum()
        mean_total = np.average(y, weights=w)
        sse_total = float(np.sum(w * (y - mean_total) ** 2))

        for j in self._candidate_features(X.shape[1]):
            order = np.argsort(X[:, j], kind="stable")
            xs, ys, ws = X[order, j], y[order], w[order]
            cw = np.cumsum(ws)
            cwy = np.cumsum(ws * ys)
            cwy2 = np.cumsum(ws * ys ** 2)
            # Splits are allowed only between distinct consecutive values.
            for i in range(self.min_leaf - 1, n - self.min_leaf):
                if xs[i] == xs[i + 1]:
                    continue
                wl, wr = cw[i], w_total - cw[i]
                if wl <= 0 or wr <= 0:
                    continue
                sl = cwy2[i] - cwy[i] ** 2 / wl
                sr = (cwy2[-1] - cwy2[i]) - (cwy[-1] - cwy[i]) ** 2 / wr
                gain = sse_total - sl - sr
                if gain > best_gain + 1e-12:
                    best_gain = gain
                    best = (j, 0.5 * (xs[i] + xs[i + 1]))

        if best is None:
            return self._leaf(y, w)

        j, threshold = best
        node = _Node()
        node.feature = j
        node.threshold = threshold
        left_mask = X[:, j] <= threshold
        node.left = self._grow(X[left_mask], y[left_mask], w[left_mask], depth + 1)
        node.right = self._grow(X[~left_mask], y[~left_mask], w[~left_mask], depth + 1)
        return node

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


class RandomForest:
    """Bootstrap-aggregated trees; reduces to the plain tree when bootstrap
    is off, max_features is 1.0 and n_trees is 1."""

    def __init__(self, n_trees=30, max_depth=4, min_leaf=2, max_features=1.0,
                 bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees = []

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        rng = np.random.default_rng(self.seed)
        n = X.shape[0]
        self.trees = []
        for _ in range(self.n_trees):
            tree_rng = np.random.default_rng(rng.integers(0, 2 ** 63))
            if self.bootstrap:
                idx = tree_rng.integers(0, n, size=n)
                Xb, yb = X[idx], y[idx]
            else:
                Xb, yb = X, y
            mf = None if self.max_features >= 1.0 else self.max_features
            tree = RegressionTree(self.max_depth, self.min_leaf, mf, tree_rng)
            tree.fit(Xb, yb)
            self.trees.append(tree)
        return self

    def predict(self, X):
        return np.mean([t.predict(X) for t in self.trees], axis=0)


class AdaBoostR2:
    """AdaBoost.R2 with linear loss and weighted-median combination.

    Trees are fitted with the boosting weights directly (no resampling), so
    the procedure is deterministic and one round equals a single plain tree.
    """

    def __init__(self, rounds=20, base_depth=3, seed=0):
        self.rounds = rounds
        self.base_depth = base_depth
        self.seed = seed  # kept for interface symmetry; fitting is deterministic
        self.trees = []
        self.log_weights = []

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        n = X.shape[0]
        # Unit weights keep round one bit-identical to a plain tree.
        w = np.ones(n)
        self.trees, self.log_weights = [], []
        for _ in range(self.rounds):
            tree = RegressionTree(max_depth=self.base_depth).fit(X, y, sample_weight=w)
            pred = tree.predict(X)
            err = np.abs(pred - y)
            max_err = err.max()
            if max_err <= 0.0:
                # Perfect fit: this tree decides alone.
                self.trees.append(tree)
                self.log_weights.append(np.log(1e12))
                break
            loss = err / max_err
            avg_loss = float(w @ loss) / float(w.sum())
            if avg_loss >= 0.5:
                if not self.trees:
                    self.trees.append(tree)
                    self.log_weights.append(1.0)
                break
            beta = avg_loss / (1.0 - avg_loss)
            self.trees.append(tree)
            self.log_weights.append(np.log(1.0 / beta))
            w = w * beta ** (1.0 - loss)
            w = w * (n / w.sum())
        return self

    def _weighted_median(self, preds):
        # preds: (n_trees, n_samples); smallest prediction whose cumulative
        # model weight reaches half the total.
        lw = np.asarray(self.log_weights)
        order = np.argsort(preds, axis=0, kind="stable")
        sorted_preds = np.take_along_axis(preds, order, axis=0)
        sorted_w = lw[order]
        cum = np.cumsum(sorted_w, axis=0)
        idx = np.argmax(cum >= 0.5 * lw.sum(), axis=0)
        return sorted_preds[idx, np.arange(preds.shape[1])]

    def predict(self, X, upto: int | None = None):
        preds = np.array([t.predict(X) for t in self.trees[:upto]])
        if upto is not None:
            saved = self.log_weights
            self.log_weights = saved[:upto]
            try:
                return self._weighted_median(preds)
            finally:
                self.log_weights = saved
        return self._weighted_median(preds)

    def staged_predict(self, X):
        """Predictions of the first k rounds for k = 1..len(trees)."""
        return [self.predict(X, upto=k) for k in range(1, len(self.trees) + 1)]


class GradientBoost:
    """Squared-loss gradient boosting: trees fitted to residuals."""

    def __init__(self, rounds=20, learning_rate=0.1, max_depth=3):
        self.rounds = rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.init = 0.0
        self.trees = []

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        self.init = float(np.mean(y))
        pred = np.full_like(y, self.init)
        self.trees = []
        for _ in range(self.rounds):
            resid = y - pred
            if np.max(np.abs(resid)) < 1e-15:
                break
            tree = RegressionTree(max_depth=self.max_depth).fit(X, resid)
            pred = pred + self.learning_rate * tree.predict(X)
            self.trees.append(tree)
        return self

    def predict(self, X):
        out = np.full(np.atleast_2d(X).shape[0], self.init)
        for tree in self.trees:
            out = out + self.learning_rate * tree.predict(X)
        return out


class BaggedGradientBoost:
    """Bagged ensemble of gradient-boosted trees (the leaderboard
    'Ensemble' entry; its composition is ambiguous upstream, this picks
    bagging over boosting)."""

    def __init__(self, n_bags=5, boost_rounds=20, learning_rate=0.1,
                 max_depth=3, seed=0):
        self.n_bags = n_bags
        self.boost_rounds = boost_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.seed = seed
        self.members = []

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        rng = np.random.default_rng(self.seed)
        n = X.shape[0]
        self.members = []
        for _ in range(self.n_bags):
            idx = rng.integers(0, n, size=n)
            gb = GradientBoost(self.boost_rounds, self.learning_rate, self.max_depth)
            gb.fit(X[idx], y[idx])
            self.members.append(gb)
        return self

    def predict(self, X):
        return np.mean([m.predict(X) for m in self.members], axis=0)


class PerTargetPayload:
    """Wraps one single-output model per target column."""

    def __init__(self, models):
        self.models = models

    def predict_raw(self, X):
        return np.column_stack([m.predict(X) for m in self.models])
