"""Squared-loss gradient boosting over depth-limited regression trees.

Splits are found with the exact greedy algorithm on presorted feature values;
no histogram binning. Samples with ``x[feature] <= threshold`` go left.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

logger = logging.getLogger(__name__)


class ConstantTargetWarning(UserWarning):
    pass


@dataclass
class RegressionTree:
    """Array-backed binary tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                break
            x = X[rows, np.where(internal, feat, 0)]
            go_left = x <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "cover": self.cover.tolist(),
                "max_depth": self.max_depth}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=int), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=int), np.array(d["right"], dtype=int),
                   np.array(d["value"], dtype=float), np.array(d["cover"], dtype=float),
                   int(d["max_depth"]))


def _best_split(Xt, sorted_idx, g, min_samples_leaf):
    """Exact greedy search over all features at once.

    ``sorted_idx`` is an ``(n_features, n_node)`` matrix whose row ``f`` lists
    the node's samples ordered by feature ``f``. Returns
    ``(gain, feature, threshold)`` or None. Ties go to the lowest feature and
    then the lowest threshold.
    """
    n_node = sorted_idx.shape[1]
    xs = np.take_along_axis(Xt, sorted_idx, axis=1)
    gs = g[sorted_idx]
    total = gs[0].sum()
    left_sum = np.cumsum(gs, axis=1)[:, :-1]
    n_left = np.arange(1, n_node)
    gain = (left_sum ** 2 / n_left + (total - left_sum) ** 2 / (n_node - n_left)
            - total * total / n_node)
    valid = xs[:, 1:] > xs[:, :-1]
    valid &= ((n_left >= min_samples_leaf) & (n_node - n_left >= min_samples_leaf))[None, :]
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    f, pos = np.unravel_index(int(np.argmax(gain)), gain.shape)
    lo, hi = xs[f, pos], xs[f, pos + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(gain[f, pos]), int(f), float(thr)


def fit_tree(X: np.ndarray, g: np.ndarray, max_depth: int, min_samples_leaf: int = 1,
             reg_lambda: float = 0.0, order=None, sample_mask=None) -> RegressionTree:
    """Least-squares regression tree on targets ``g`` grown depth-first.

    ``order`` is an ``(n_features, n_rows)`` matrix of presorted row indices.
    Each node keeps its own sorted slice so a level costs
    ``O(n_rows * n_features)``.
    """
    if order is None:
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    if sample_mask is not None:
        keep = sample_mask[order]
        order = order[keep].reshape(order.shape[0], -1)
    feature, threshold, left, right, value, cover = [], [], [], [], [], []
    go_left = np.zeros(X.shape[0], dtype=bool)
    Xt = np.ascontiguousarray(X.T)

    def grow(sorted_idx, depth):
        node = len(feature)
        rows = sorted_idx[0]
        n_node = len(rows)
        gn = g[rows]
        s = float(gn.sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(s / (n_node + reg_lambda))
        cover.append(float(n_node))
        if depth >= max_depth or n_node < 2 * min_samples_leaf:
            return node
        sse = float(np.sum((gn - s / n_node) ** 2))
        if sse <= 1e-24:
            return node
        split = _best_split(Xt, sorted_idx, g, min_samples_leaf)
        if split is None or split[0] <= 1e-12 * sse:
            return node
        _, f, thr = split
        go_left[rows] = X[rows, f] <= thr
        sel = go_left[sorted_idx]
        n_l = int(sel[0].sum())
        feature[node], threshold[node] = f, thr
        left[node] = grow(sorted_idx[sel].reshape(-1, n_l), depth + 1)
        right[node] = grow(sorted_idx[~sel].reshape(-1, n_node - n_l), depth + 1)
        return node

    grow(order, 0)
    return RegressionTree(np.array(feature, dtype=int), np.array(threshold, dtype=float),
                          np.array(left, dtype=int), np.array(right, dtype=int),
                          np.array(value, dtype=float), np.array(cover, dtype=float), max_depth)


class GradientBoostedTrees(RegressorMixin, BaseEstimator):
    """Gradient boosting for squared loss.

    Round ``r`` fits a depth-limited tree to the current residuals and adds it
    with shrinkage ``learning_rate``. Predictions are
    ``base_score_ + learning_rate * sum(tree(x))``.

    Parameters
    ----------
    n_estimators : int, default=200
    learning_rate : float, default=0.1
    max_depth : int, default=4
    min_samples_leaf : int, default=1
    reg_lambda : float, default=0.0
        L2 penalty on leaf values (``sum / (count + reg_lambda)``).
    subsample : float, default=1.0
        Row fraction drawn (without replacement) per round.
    random_state : int, default=0

    Attributes
    ----------
    base_score_ : float
        Mean of the training target.
    trees_ : list of RegressionTree
    train_rmse_ : ndarray
        Training RMSE before the first tree and after every round.
    """

    def __init__(self, n_estimators: int = 200, learning_rate: float = 0.1, max_depth: int = 4,
                 min_samples_leaf: int = 1, reg_lambda: float = 0.0, subsample: float = 1.0,
                 random_state: int = 0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.reg_lambda = reg_lambda
        self.subsample = subsample
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1 or self.n_estimators < 0:
            raise ValueError("max_depth must be >= 1 and n_estimators >= 0")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        self.n_features_in_ = X.shape[1]
        self.base_score_ = float(np.mean(y))
        self.trees_ = []
        pred = np.full(len(y), self.base_score_)
        rmse = [float(np.sqrt(np.mean((y - pred) ** 2)))]
        if np.ptp(y) == 0:
            warnings.warn("constant target; model is the base score only", ConstantTargetWarning)
            self.train_rmse_ = np.array(rmse)
            return self
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        rng = np.random.default_rng(self.random_state)
        n_sub = max(1, int(round(self.subsample * len(y))))
        for _ in range(self.n_estimators):
            mask = None
            if n_sub < len(y):
                mask = np.zeros(len(y), dtype=bool)
                mask[rng.choice(len(y), n_sub, replace=False)] = True
            tree = fit_tree(X, y - pred, self.max_depth, self.min_samples_leaf, self.reg_lambda,
                            order=order, sample_mask=mask)
            if tree.n_nodes == 1 and mask is None:
                break
            self.trees_.append(tree)
            pred = pred + self.learning_rate * tree.predict(X)
            rmse.append(float(np.sqrt(np.mean((y - pred) ** 2))))
        self.train_rmse_ = np.array(rmse)
        return self

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_dict(self) -> dict:
        check_is_fitted(self, "trees_")
        return {"params": self.get_params(), "base_score": self.base_score_,
                "n_features": self.n_features_in_,
                "train_rmse": self.train_rmse_.tolist(),
                "trees": [t.to_dict() for t in self.trees_]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoostedTrees":
        model = cls(**d["params"])
        model.base_score_ = float(d["base_score"])
        model.n_features_in_ = int(d["n_features"])
        model.train_rmse_ = np.array(d["train_rmse"], dtype=float)
        model.trees_ = [RegressionTree.from_dict(t) for t in d["trees"]]
        return model
