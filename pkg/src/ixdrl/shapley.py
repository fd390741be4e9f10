"""Shapley attributions for :class:`~ixdrl.gbt.GradientBoostedTrees`.

Two routes are provided and kept independent of each other:

* :func:`shap_tree` decomposes every tree into root-to-leaf paths. On one path
  the model output is a product game over the features split on along it, so
  each feature's Shapley value has a closed form obtained from the
  coefficients of a small polynomial. Cost is polynomial in tree depth and
  vectorised over rows.
* :func:`shap_exact` evaluates the coalition value function directly for all
  ``2^m`` coalitions and applies the Shapley weights. It is exponential and
  meant as a reference.

Both support the same two conventions for "feature absent":

``background=None`` (path-dependent)
    Absent features follow both branches weighted by the training cover of
    each child.
``background=array`` (interventional)
    Absent features take their values from each background row; the result is
    averaged over background rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .gbt import GradientBoostedTrees, RegressionTree

MAX_EXACT_FEATURES = 20
MAX_BACKGROUND = 256


@dataclass
class ShapleyResult:
    """Attributions for a batch of rows.

    ``values[i].sum() + base_value == predictions[i]`` up to rounding.
    """

    values: np.ndarray
    base_value: float
    predictions: np.ndarray
    convention: str

    @property
    def additivity_error(self) -> float:
        if len(self.predictions) == 0:
            return 0.0
        return float(np.max(np.abs(self.values.sum(axis=1) + self.base_value - self.predictions)))


def _shapley_weights(p: int) -> np.ndarray:
    """``w[s] = s! (p - s - 1)! / p!`` for ``s = 0 .. p-1``."""
    return np.array([math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p)
                     for s in range(p)])


@dataclass
class _Path:
    value: float
    features: np.ndarray          # unique features on the path
    cover_frac: np.ndarray        # product of cover ratios per feature
    conds: list                   # per feature: list of (threshold, goes_left)


def tree_paths(tree: RegressionTree) -> list[_Path]:
    """Root-to-leaf paths with per-feature merged conditions."""
    out = []

    def walk(node, conds):
        if tree.is_leaf(node):
            merged: dict[int, list] = {}
            frac: dict[int, float] = {}
            for f, thr, goes_left, ratio in conds:
                merged.setdefault(f, []).append((thr, goes_left))
                frac[f] = frac.get(f, 1.0) * ratio
            feats = np.array(sorted(merged), dtype=int)
            out.append(_Path(float(tree.value[node]), feats,
                             np.array([frac[f] for f in feats]),
                             [merged[f] for f in feats]))
            return
        f, thr = int(tree.feature[node]), float(tree.threshold[node])
        parent = tree.cover[node]
        lc, rc = tree.left[node], tree.right[node]
        walk(lc, conds + [(f, thr, True, tree.cover[lc] / parent)])
        walk(rc, conds + [(f, thr, False, tree.cover[rc] / parent)])

    walk(0, [])
    return out


def _satisfies(X: np.ndarray, feature: int, conds) -> np.ndarray:
    ok = np.ones(X.shape[0], dtype=bool)
    for thr, goes_left in conds:
        ok &= (X[:, feature] <= thr) if goes_left else (X[:, feature] > thr)
    return ok


def _product_shapley(one: list, zero: list) -> list:
    """Shapley values of the product game ``prod_{j in S} o_j prod_{j not in S} z_j``.

    ``one`` and ``zero`` hold one broadcastable array per player. For player
    ``j`` the marginal sum over coalitions of size ``s`` equals the ``t^s``
    coefficient of ``prod_{k != j} (z_k + o_k t)``.
    """
    p = len(one)
    weights = _shapley_weights(p)
    phis = []
    for j in range(p):
        coeffs = [np.ones_like(one[j] * zero[j])]
        for k in range(p):
            if k == j:
                continue
            nxt = [coeffs[0] * zero[k]]
            for s in range(1, len(coeffs)):
                nxt.append(coeffs[s] * zero[k] + coeffs[s - 1] * one[k])
            nxt.append(coeffs[-1] * one[k])
            coeffs = nxt
        total = sum(w * c for w, c in zip(weights, coeffs))
        phis.append((one[j] - zero[j]) * total)
    return phis


@lru_cache(maxsize=None)
def _binary_table(p: int) -> np.ndarray:
    """``T[o, z, j]``: the product game's values when every factor is 0 or 1.

    ``o`` and ``z`` are bit patterns (bit ``k`` for player ``k``) of the
    explained row and of a background row. Under the interventional
    convention a path only sees these patterns, so the background can be
    reduced to a histogram over them.
    """
    bits = (np.arange(2 ** p)[:, None] >> np.arange(p)) & 1
    one = [bits[:, k].astype(float)[:, None] for k in range(p)]
    zero = [bits[:, k].astype(float)[None, :] for k in range(p)]
    return np.stack(_product_shapley(one, zero), axis=-1)


def _pattern(X: np.ndarray, path: _Path) -> np.ndarray:
    code = np.zeros(X.shape[0], dtype=np.int64)
    for k, (f, c) in enumerate(zip(path.features, path.conds)):
        code |= _satisfies(X, f, c).astype(np.int64) << k
    return code


def _model_paths(model: GradientBoostedTrees) -> list[list[_Path]]:
    return [tree_paths(t) for t in model.trees_]


def shap_tree(model: GradientBoostedTrees, X, background=None) -> ShapleyResult:
    """Polynomial-time Shapley values for every row of ``X``.

    Parameters
    ----------
    model : GradientBoostedTrees
        Fitted model.
    X : array-like of shape (n_rows, n_features)
    background : array-like of shape (n_bg, n_features), optional
        Reference rows for the interventional convention. When omitted the
        path-dependent convention is used.

    Returns
    -------
    ShapleyResult
    """
    check_is_fitted(model, "trees_")
    X = check_array(X, dtype=float, ensure_min_samples=0)
    if X.shape[1] != model.n_features_in_:
        raise ValueError(f"expected {model.n_features_in_} features, got {X.shape[1]}")
    m = X.shape[1]
    eta = model.learning_rate
    uniq, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    phi = np.zeros((uniq.shape[0], m))
    if background is None:
        convention = "path-dependent"
        base = model.base_score_
        for paths in _model_paths(model):
            for path in paths:
                base += eta * path.value * float(np.prod(path.cover_frac))
                p = len(path.features)
                if p == 0:
                    continue
                one = [_satisfies(uniq, f, c).astype(float)
                       for f, c in zip(path.features, path.conds)]
                zero = [np.full(uniq.shape[0], z) for z in path.cover_frac]
                for f, contrib in zip(path.features, _product_shapley(one, zero)):
                    phi[:, f] += eta * path.value * contrib
    else:
        convention = "interventional"
        bg = check_array(background, dtype=float)
        if bg.shape[1] != m:
            raise ValueError("background has the wrong number of features")
        base = float(np.mean(model.predict(bg)))
        for paths in _model_paths(model):
            for path in paths:
                p = len(path.features)
                if p == 0:
                    continue
                hist = np.bincount(_pattern(bg, path), minlength=2 ** p) / bg.shape[0]
                table = _binary_table(p)[_pattern(uniq, path)]          # (rows, 2^p, p)
                phi[:, path.features] += eta * path.value * np.einsum("nzj,z->nj", table, hist)
    preds = model.predict(X) if X.shape[0] else np.zeros(0)
    return ShapleyResult(phi[inverse] if X.shape[0] else np.zeros((0, m)), float(base), preds, convention)


def _cond_expectation(tree: RegressionTree, x: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Path-dependent ``E[tree(x) | x_S]`` for every coalition row of ``masks``."""

    def rec(node, active):
        if tree.is_leaf(node):
            return np.full(active.shape[0], tree.value[node])
        f = tree.feature[node]
        lc, rc = tree.left[node], tree.right[node]
        left_val, right_val = rec(lc, active), rec(rc, active)
        follow = np.where(x[f] <= tree.threshold[node], left_val, right_val)
        cover = tree.cover[node]
        avg = (tree.cover[lc] * left_val + tree.cover[rc] * right_val) / cover
        return np.where(masks[:, f], follow, avg)

    return rec(0, masks)


def shap_exact(model: GradientBoostedTrees, row, background=None) -> ShapleyResult:
    """Brute-force Shapley values for a single row by coalition enumeration.

    Evaluates the coalition value function for all ``2^m`` subsets, so it
    refuses more than ``MAX_EXACT_FEATURES`` features; use :func:`shap_tree`
    for wider models.
    """
    check_is_fitted(model, "trees_")
    x = np.asarray(row, dtype=float).reshape(-1)
    m = x.size
    if m != model.n_features_in_:
        raise ValueError(f"expected {model.n_features_in_} features, got {m}")
    if m > MAX_EXACT_FEATURES:
        raise ValueError(f"exact enumeration is limited to {MAX_EXACT_FEATURES} features "
                         f"(got {m}); use shap_tree instead")
    codes = np.arange(2 ** m)
    masks = ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
    if background is None:
        convention = "path-dependent"
        v = np.full(codes.size, model.base_score_)
        for tree in model.trees_:
            v += model.learning_rate * _cond_expectation(tree, x, masks)
    else:
        convention = "interventional"
        bg = np.asarray(background, dtype=float)
        if bg.ndim != 2 or bg.shape[1] != m:
            raise ValueError("background has the wrong shape")
        v = np.empty(codes.size)
        for c in codes:
            hybrid = np.where(masks[c][None, :], x[None, :], bg)
            v[c] = model.predict(hybrid).mean()
    sizes = masks.sum(axis=1)
    weights = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m)
                        if s < m else 0.0 for s in range(m + 1)])
    phi = np.empty(m)
    for i in range(m):
        without = codes[~masks[:, i]]
        phi[i] = float(np.sum(weights[sizes[without]] * (v[without | (1 << i)] - v[without])))
    return ShapleyResult(phi[None, :], float(v[0]), np.array([float(v[-1])]), convention)
