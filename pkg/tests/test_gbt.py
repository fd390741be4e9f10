import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.tree import DecisionTreeRegressor

from ixdrl.gbt import ConstantTargetWarning, GradientBoostedTrees, RegressionTree, fit_tree

from .oracles import tree_value


def _data(seed, n=200, m=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    y = np.sin(X[:, 0]) + X[:, 1] * (X[:, 2] > 0) + 0.1 * rng.normal(size=n)
    return X, y


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.floats(0.05, 1.0))
def test_train_rmse_non_increasing(seed, depth, lr):
    X, y = _data(seed, n=120)
    model = GradientBoostedTrees(n_estimators=30, max_depth=depth, learning_rate=lr).fit(X, y)
    assert len(model.train_rmse_) == len(model.trees_) + 1
    assert np.all(np.diff(model.train_rmse_) <= 1e-12)


def test_stump_target_recovered():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(500, 3))
    y = np.where(X[:, 1] > 0.5, 2.0, -1.0)
    model = GradientBoostedTrees(n_estimators=100, max_depth=1).fit(X, y)
    assert np.mean(np.abs(model.predict(X) - y)) < 0.01
    assert {t.feature[0] for t in model.trees_} == {1}


def test_constant_target():
    X = np.random.default_rng(0).normal(size=(50, 3))
    with pytest.warns(ConstantTargetWarning):
        model = GradientBoostedTrees().fit(X, np.full(50, 3.5))
    assert model.trees_ == []
    assert np.all(model.predict(X) == 3.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.integers(1, 5))
def test_single_tree_matches_sklearn(seed, depth, leaf):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(150, 4))
    y = rng.normal(size=150) + 2 * (X[:, 0] > 0.3)
    ours = fit_tree(X, y, depth, min_samples_leaf=leaf)
    ref = DecisionTreeRegressor(max_depth=depth, min_samples_leaf=leaf, random_state=0).fit(X, y)
    # sklearn breaks exact gain ties by a random feature order, so compare fits, not structure
    assert np.allclose(ours.predict(X), ref.predict(X), atol=1e-9)
    assert ours.n_leaves == ref.get_n_leaves()


def test_tree_predict_matches_direct_walk():
    X, y = _data(1)
    tree = fit_tree(X, y, 4)
    assert np.allclose(tree.predict(X), [tree_value_walk(tree, x) for x in X])


def tree_value_walk(tree, x, node=0):
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return tree.value[node]


def test_cover_sums():
    X, y = _data(2)
    tree = fit_tree(X, y, 3)
    assert tree.cover[0] == len(y)
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            assert tree.cover[tree.left[i]] + tree.cover[tree.right[i]] == tree.cover[i]


def test_min_samples_leaf_respected():
    X, y = _data(3)
    tree = fit_tree(X, y, 6, min_samples_leaf=7)
    assert tree.cover[tree.feature < 0].min() >= 7


def test_determinism_and_round_trip():
    X, y = _data(4)
    a = GradientBoostedTrees(n_estimators=20, subsample=0.7, random_state=5).fit(X, y)
    b = GradientBoostedTrees(n_estimators=20, subsample=0.7, random_state=5).fit(X, y)
    assert np.array_equal(a.predict(X), b.predict(X))
    back = GradientBoostedTrees.from_dict(json.loads(json.dumps(a.to_dict())))
    assert np.array_equal(back.predict(X), a.predict(X))
    assert back.get_params() == a.get_params()


def test_prediction_formula():
    X, y = _data(5)
    model = GradientBoostedTrees(n_estimators=15, learning_rate=0.3).fit(X, y)
    manual = model.base_score_ + 0.3 * sum(t.predict(X) for t in model.trees_)
    assert np.allclose(model.predict(X), manual)


@pytest.mark.parametrize("kw", [dict(learning_rate=0.0), dict(learning_rate=1.5), dict(max_depth=0),
                                dict(subsample=0.0), dict(n_estimators=-1)])
def test_parameter_validation(kw):
    X, y = _data(6, n=20)
    with pytest.raises(ValueError):
        GradientBoostedTrees(**kw).fit(X, y)


def test_feature_count_checked_by_predict():
    X, y = _data(7, n=30)
    model = GradientBoostedTrees(n_estimators=3).fit(X, y)
    assert model.score(X, y) > 0
    with pytest.raises(ValueError):
        model.predict(X[:, :2])


def test_early_stop_on_unsplittable_residuals():
    X = np.zeros((10, 2))
    y = np.arange(10.0)
    model = GradientBoostedTrees(n_estimators=50).fit(X, y)
    assert model.trees_ == []
    assert model.predict(X[:1])[0] == pytest.approx(4.5)


def test_oracle_tree_value_helper_agrees():
    X, y = _data(8)
    tree = fit_tree(X, y, 3)
    for x in X[:20]:
        assert tree_value(_NodeView(tree, 0), x) == tree_value_walk(tree, x)


class _NodeView:
    """Adapter presenting an array tree as linked nodes for the oracle helper."""

    def __init__(self, tree: RegressionTree, node: int):
        self.t, self.n = tree, node

    @property
    def is_leaf(self):
        return self.t.feature[self.n] < 0

    @property
    def feature(self):
        return self.t.feature[self.n]

    @property
    def threshold(self):
        return self.t.threshold[self.n]

    @property
    def left(self):
        return _NodeView(self.t, self.t.left[self.n])

    @property
    def right(self):
        return _NodeView(self.t, self.t.right[self.n])

    @property
    def value(self):
        return self.t.value[self.n]
