"""Multi-output CART regression trees and a bagged forest of them."""

from __future__ import annotations

import numpy as np


class RegressionTree:
    """Binary tree grown greedily on summed per-target squared error.

    Nodes are stored in flat arrays; ``left == -1`` marks a leaf.
    """

    def __init__(self, max_depth=None, min_samples_split=2, min_samples_leaf=1,
                 max_features=None, rng=None):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def fit(self, X, Y, sample_idx=None):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if sample_idx is None:
            sample_idx = np.arange(len(X))
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(Y[idx].mean(axis=0))
            return len(feature) - 1

        root = new_node(sample_idx)
        stack = [(root, sample_idx, 0)]
        while stack:
            node, idx, depth = stack.pop()
            if len(idx) < self.min_samples_split:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            found = self._best_split(X, Y, idx)
            if found is None:
                continue
            f, thr = found
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            # right pushed first so the left subtree is numbered first
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold, dtype=float)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value, dtype=float).reshape(len(feature), Y.shape[1])
        return self

    def _best_split(self, X, Y, idx):
        n = len(idx)
        n_features = X.shape[1]
        if self.max_features is None or self.max_features >= n_features:
            features = range(n_features)
        else:
            features = np.sort(self.rng.choice(n_features, self.max_features, replace=False))
        ys = Y[idx]
        parent = (ys.sum(axis=0) ** 2).sum() / n
        best_gain, best = 1e-12 * max(1.0, float((ys ** 2).sum())), None
        leaf = self.min_samples_leaf
        n_left = np.arange(1, n)
        for f in features:
            order = np.argsort(X[idx, f], kind="stable")
            xs = X[idx[order], f]
            csum = np.cumsum(ys[order], axis=0)
            s_left = csum[:-1]
            s_right = csum[-1] - s_left
            # SSE reduction up to a constant: |S_L|^2/n_L + |S_R|^2/n_R - |S|^2/n
            gain = (s_left ** 2).sum(axis=1) / n_left + (s_right ** 2).sum(axis=1) / (n - n_left) - parent
            valid = xs[1:] > xs[:-1]
            valid &= (n_left >= leaf) & (n - n_left >= leaf)
            if not valid.any():
                continue
            gain = np.where(valid, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                thr = 0.5 * (xs[i] + xs[i + 1])
                if not xs[i] <= thr < xs[i + 1]:
                    thr = xs[i]
                best_gain, best = gain[i], (int(f), float(thr))
        return best

    def apply(self, X):
        """Leaf index reached by every row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            internal = self.left_[node] >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.maximum(self.feature_[node], 0)] <= self.threshold_[node]
            node = np.where(internal, np.where(go_left, self.left_[node], self.right_[node]), node)

    def predict(self, X):
        return self.value_[self.apply(X)]

    @property
    def n_nodes(self):
        return len(self.feature_)


class RandomForest:
    """Average of bootstrapped regression trees.

    Parameters
    ----------
    n_estimators : int
        Number of trees.
    bootstrap : bool
        Draw each tree's rows with replacement; otherwise every tree sees all rows.
    max_depth, min_samples_split, min_samples_leaf, max_features
        Passed to every :class:`RegressionTree`.
    seed : int
        Seeds bootstrap draws and feature subsampling.
    """

    kind = "rf"
    standardized_output = True

    def __init__(self, n_estimators=100, criterion="squared_error", max_depth=None,
                 min_samples_split=2, min_samples_leaf=1, max_features=None,
                 bootstrap=True, seed=0):
        if criterion != "squared_error":
            raise ValueError(f"unsupported criterion {criterion!r}")
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def hyperparameters(self):
        return {
            "n_estimators": self.n_estimators,
            "criterion": self.criterion,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
        }

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        n = len(X)
        if n < 2:
            raise ValueError("random forest needs at least 2 rows")
        rng = np.random.default_rng(self.seed)
        self.trees_ = []
        self.samples_ = []
        for _ in range(self.n_estimators):
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = RegressionTree(self.max_depth, self.min_samples_split, self.min_samples_leaf,
                                  self.max_features, rng)
            tree.fit(X, Y, np.sort(idx))
            self.trees_.append(tree)
            self.samples_.append(idx)
        self.n_outputs_ = Y.shape[1]
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        acc = np.zeros((len(X), self.n_outputs_))
        for tree in self.trees_:
            acc += tree.predict(X)
        return acc / len(self.trees_)

    def oob_predict(self, X_train):
        """Out-of-bag prediction per training row (NaN where every tree saw the row)."""
        X_train = np.asarray(X_train, dtype=float)
        n = len(X_train)
        acc = np.zeros((n, self.n_outputs_))
        count = np.zeros(n)
        for tree, idx in zip(self.trees_, self.samples_):
            out = np.ones(n, dtype=bool)
            out[idx] = False
            if out.any():
                acc[out] += tree.predict(X_train[out])
                count[out] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return acc / count[:, None]

    # flat array state for the model container
    def get_state(self):
        sizes = np.array([t.n_nodes for t in self.trees_], dtype=np.int64)
        cat = lambda attr: np.concatenate([getattr(t, attr) for t in self.trees_])
        arrays = {
            "tree_sizes": sizes,
            "feature": cat("feature_"),
            "threshold": cat("threshold_"),
            "left": cat("left_"),
            "right": cat("right_"),
            "value": np.concatenate([t.value_ for t in self.trees_], axis=0),
        }
        return {"n_outputs": self.n_outputs_, **self.hyperparameters(), "seed": self.seed}, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        meta = dict(meta)
        n_outputs = meta.pop("n_outputs")
        self = cls(**meta)
        self.n_outputs_ = n_outputs
        self.trees_, self.samples_ = [], []
        start = 0
        for size in arrays["tree_sizes"].tolist():
            t = RegressionTree()
            sl = slice(start, start + size)
            t.feature_ = arrays["feature"][sl]
            t.threshold_ = arrays["threshold"][sl]
            t.left_ = arrays["left"][sl]
            t.right_ = arrays["right"][sl]
            t.value_ = arrays["value"][sl]
            self.trees_.append(t)
            start += size
        return self
