import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spritesurrogate.features import build_schema
from spritesurrogate.shap import (
    Attribution,
    ShapError,
    SpriteAttribution,
    attribution_table,
    brute_force_shap,
    ensemble_shap,
    rank_sprites,
    tree_shap,
)
from spritesurrogate.sprites import Sprite, SpriteDecomposition
from spritesurrogate.trees import TreeModel, TreeParams, fit_ensemble, fit_tree, predict_proba


def random_tree(seed, n_feat=4, n=60, depth=None):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (n, n_feat)).astype(float)
    y = rng.integers(0, 3, n)
    params = TreeParams(max_depth=depth) if depth is not None else None
    return fit_tree(X, y, params, n_classes=3), X


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 4))
def test_fast_path_matches_enumeration(seed, n_feat):
    tree, X = random_tree(seed, n_feat)
    x = X[seed % len(X)] + 0.25 * (seed % 3)
    fast, slow = tree_shap(tree, x), brute_force_shap(tree, x)
    assert np.max(np.abs(fast.values - slow.values)) <= 1e-9
    assert np.allclose(fast.base_value, slow.base_value)
    assert np.allclose(fast.output, slow.output)


def test_deep_tree_matches_enumeration():
    tree, X = random_tree(1, 6, n=400)
    assert tree.max_depth > 6  # features repeat along paths
    for x in X[:10]:
        assert np.max(np.abs(tree_shap(tree, x).values - brute_force_shap(tree, x).values)) <= 1e-9


def test_unused_feature_gets_zero():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 3))
    X[:, 1] = 7.0
    tree = fit_tree(X, (X[:, 0] > 0).astype(int) + (X[:, 2] > 0.5))
    for x in X[:20]:
        assert np.all(tree_shap(tree, x).values[1] == 0.0)


def test_stump_attributes_everything_to_its_feature():
    X = np.array([[0.0, 5.0], [0.0, 1.0], [1.0, 5.0], [1.0, 1.0]])
    tree = fit_tree(X, np.array([0, 0, 1, 1]))
    a = tree_shap(tree, X[2])
    assert np.allclose(a.base_value, [0.5, 0.5])
    assert np.allclose(a.values[0], [-0.5, 0.5])
    assert np.all(a.values[1] == 0)


def test_single_leaf():
    tree = fit_tree(np.zeros((3, 2)), np.array([0, 1, 1]))
    a = tree_shap(tree, np.array([4.0, 4.0]))
    assert np.all(a.values == 0)
    assert np.allclose(a.base_value, a.output)


def test_symmetric_features_share_credit():
    # y = x0 AND x1 on a balanced grid; the state (1, 1) treats both alike
    X = np.array([[a, b] for a in (0.0, 1.0) for b in (0.0, 1.0)] * 5)
    y = (X[:, 0] * X[:, 1]).astype(int)
    a = tree_shap(fit_tree(X, y), np.array([1.0, 1.0]))
    assert a.values[0] == pytest.approx(a.values[1], abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_efficiency(seed):
    tree, X = random_tree(seed, 4)
    for x in X[:15]:
        a = tree_shap(tree, x)
        assert a.local_accuracy_error() <= 1e-9
        assert np.allclose(a.output, predict_proba(tree, x))
        assert np.allclose(a.values.sum(axis=1), 0.0)  # classes sum to one


def test_ensemble_is_mean_of_trees():
    rng = np.random.default_rng(4)
    X = rng.integers(0, 5, (150, 5)).astype(float)
    y = rng.integers(0, 3, 150)
    ens = fit_ensemble(X, y, n_trees=6, seed=1)
    for x in X[:10]:
        a = ensemble_shap(ens, x)
        per_tree = [tree_shap(t, x) for t in ens.trees]
        assert np.allclose(a.values, np.mean([p.values for p in per_tree], axis=0))
        assert np.allclose(a.output, predict_proba(ens, x))
        assert a.local_accuracy_error() <= 1e-9


def test_missing_coverage():
    tree, X = random_tree(0)
    broken = TreeModel(tree.left, tree.right, tree.feature, tree.threshold, tree.counts * 0, tree.n_features)
    with pytest.raises(ShapError):
        tree_shap(broken, X[0])


def test_brute_force_limit():
    tree = fit_tree(np.zeros((2, 21)), np.array([0, 1]))
    with pytest.raises(ShapError):
        brute_force_shap(tree, np.zeros(21))


# -- sprites ---------------------------------------------------------------------


def schema3():
    sprites = [Sprite(c, ((i, i),)) for i, c in enumerate((0xAA0000, 0x00AA00, 0x0000AA))]
    return build_schema([SpriteDecomposition(tuple(sprites), 0, 10, 10)], False, 2)


def fake_attr(values, state):
    values = np.asarray(values, dtype=float)
    return Attribution(np.zeros(2), values, np.array([0.2, 0.8]), np.asarray(state, dtype=float))


def test_rank_only_present_slots_and_ties_keep_order():
    schema = schema3()
    values = np.zeros((15, 2))
    values[1, 1] = -0.3  # slot 0 x
    values[9, 1] = 0.3  # slot 1 vy
    values[12, 1] = 0.9  # slot 2, absent
    state = np.zeros(15)
    state[[0, 5]] = 1
    r = rank_sprites(fake_attr(values, state), schema)
    assert r.slots == (0, 1)
    assert r.max_abs_shap == (0.3, 0.3)
    assert r.ranks == (1, 2)
    assert r.predicted_class == 1
    assert rank_sprites(fake_attr(values, state), schema, cls=0).max_abs_shap == (0.0, 0.0)


def test_top_fraction():
    r = SpriteAttribution(tuple(range(11)), (0.0,) * 11, tuple(range(1, 12)), 0)
    assert len(r.top(0.1)) == 2
    assert r.top(0.1) == (0, 1)
    assert SpriteAttribution(tuple(range(10)), (0.0,) * 10, tuple(range(1, 11)), 0).top(0.1) == (0,)
    assert SpriteAttribution((), (), (), 0).top(0.1) == ()


def test_attribution_table():
    a = fake_attr(np.arange(4).reshape(2, 2), [1, 0])
    text = attribution_table(a, ["a", "b"], ["noop", "up"])
    rows = text.splitlines()
    assert rows[0] == "feature,class,shapley_value"
    assert rows[1] == "(base),noop,0"
    assert rows[-1] == "b,up,3"
    assert len(rows) == 7
