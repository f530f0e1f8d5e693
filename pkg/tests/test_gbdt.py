# -*- coding: utf-8 -*-
import numpy as np
import pytest

from core.errors import DimensionMismatch, InsufficientData, SingleClass
from core.features import FeatureConfig, FeatureMatrix
from core.gbdt import (GbdtModel, GbdtParams, fit_tree, gbdt_decision_function, gbdt_fit,
                       gbdt_predict_proba, gbdt_score, logistic_grad_hess, logistic_loss,
                       pool_features)

LAM = 1.0


# ── 朴素树生长（对照用）──────────────────────────────────────

def _gain(g, h, left):
    G, H = g.sum(), h.sum()
    GL, HL = g[left].sum(), h[left].sum()
    return 0.5 * (GL ** 2 / (HL + LAM) + (G - GL) ** 2 / (H - HL + LAM) - G ** 2 / (H + LAM))


def _candidates(col):
    u = np.unique(col)
    return 0.5 * (u[:-1] + u[1:])


def _naive_depthwise(X, g, h, idx, depth):
    """返回 [(样本号数组, 叶值)]"""
    best = (1e-12, None, None)
    if depth > 0 and idx.size >= 2:
        for f in range(X.shape[1]):
            for thr in _candidates(X[idx, f]):
                gain = _gain(g[idx], h[idx], X[idx, f] < thr)
                if gain > best[0]:
                    best = (gain, f, thr)
    if best[1] is None:
        return [(idx, -g[idx].sum() / (h[idx].sum() + LAM))]
    _, f, thr = best
    return (_naive_depthwise(X, g, h, idx[X[idx, f] < thr], depth - 1)
            + _naive_depthwise(X, g, h, idx[X[idx, f] >= thr], depth - 1))


def _naive_symmetric(X, g, h, depth):
    groups = [np.arange(X.shape[0])]
    for _ in range(depth):
        best = (1e-12, None, None)
        for f in range(X.shape[1]):
            for thr in _candidates(X[:, f]):
                gain = sum(_gain(g[grp], h[grp], X[grp, f] < thr) for grp in groups if grp.size)
                if gain > best[0]:
                    best = (gain, f, thr)
        if best[1] is None:
            break
        _, f, thr = best
        groups = [part for grp in groups
                  for part in (grp[X[grp, f] < thr], grp[X[grp, f] >= thr])]
    return [(grp, -g[grp].sum() / (h[grp].sum() + LAM) if grp.size else 0.0) for grp in groups]


def _leaf_predictions(leaves, n):
    out = np.full(n, np.nan)
    for idx, value in leaves:
        out[idx] = value
    return out


# ── 树 ───────────────────────────────────────────────────────

@pytest.mark.parametrize('seed', range(5))
@pytest.mark.parametrize('depth', [1, 2, 3])
def test_depthwise_tree_matches_naive(seed, depth):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 3))
    g = rng.standard_normal(40)
    h = rng.uniform(0.05, 0.25, 40)
    tree = fit_tree(X, g, h, depth, LAM, 'depthwise')
    want = _leaf_predictions(_naive_depthwise(X, g, h, np.arange(40), depth), 40)
    np.testing.assert_allclose(tree.predict(X), want, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize('seed', range(3))
def test_deep_depthwise_tree_matches_naive(seed):
    # 默认深度：每层有多个节点同时分裂
    rng = np.random.default_rng(50 + seed)
    X = rng.standard_normal((120, 3))
    g = rng.standard_normal(120)
    h = rng.uniform(0.05, 0.25, 120)
    tree = fit_tree(X, g, h, 6, LAM, 'depthwise')
    leaves = _naive_depthwise(X, g, h, np.arange(120), 6)
    assert len(leaves) > 8
    assert int(np.sum(tree.feature == -1)) == len(leaves)
    np.testing.assert_allclose(tree.predict(X), _leaf_predictions(leaves, 120), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize('seed', range(5))
@pytest.mark.parametrize('depth', [1, 2, 3])
def test_symmetric_tree_matches_naive(seed, depth):
    rng = np.random.default_rng(100 + seed)
    X = rng.standard_normal((40, 3))
    g = rng.standard_normal(40)
    h = rng.uniform(0.05, 0.25, 40)
    tree = fit_tree(X, g, h, depth, LAM, 'symmetric')
    want = _leaf_predictions(_naive_symmetric(X, g, h, depth), 40)
    np.testing.assert_allclose(tree.predict(X), want, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize('preset', ['depthwise', 'symmetric'])
def test_two_point_stump(preset):
    X = np.array([[0.0], [1.0]])
    y = np.array([0.0, 1.0])
    g, h = logistic_grad_hess(y, np.zeros(2))
    tree = fit_tree(X, g, h, depth=1, lam=1.0, preset=preset)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == pytest.approx(0.5)
    np.testing.assert_allclose(tree.predict(X), [-0.4, 0.4])

    model = GbdtModel(trees=[tree], learning_rate=0.1, base_score=0.0, preset=preset, dim=1)
    assert gbdt_score(model, [1.0]) == pytest.approx(0.04)
    assert gbdt_score(model, [0.0]) == pytest.approx(-0.04)


def test_unknown_preset():
    with pytest.raises(ValueError):
        fit_tree(np.zeros((4, 1)), np.zeros(4), np.ones(4), preset='leafwise')
    with pytest.raises(ValueError):
        GbdtParams(preset='leafwise')
    with pytest.raises(ValueError):
        GbdtParams(depth=16)


# ── 损失与提升 ───────────────────────────────────────────────

def _dataset(seed, n=80, d=4):
    rng = np.random.default_rng(seed)
    y = (rng.uniform(size=n) < 0.4).astype(float)
    X = rng.standard_normal((n, d)) + y[:, None] * np.array([1.0, -0.5, 0.0, 0.3])
    return X, y


@pytest.mark.parametrize('preset', ['depthwise', 'symmetric'])
def test_gradients_match_finite_differences(preset):
    X, y = _dataset(1)
    model = gbdt_fit(X, y, GbdtParams(num_trees=10, depth=3, preset=preset))
    n, eps = y.size, 1e-5
    raw = np.full(n, model.base_score)
    for tree in [None] + model.trees:
        if tree is not None:
            raw = raw + model.learning_rate * tree.predict(X)
        g, h = logistic_grad_hess(y, raw)
        num_g = np.empty(n)
        num_h = np.empty(n)
        for i in range(n):
            up, down = raw.copy(), raw.copy()
            up[i] += eps
            down[i] -= eps
            num_g[i] = n * (logistic_loss(y, up) - logistic_loss(y, down)) / (2 * eps)
            gu, _ = logistic_grad_hess(y, up)
            gd, _ = logistic_grad_hess(y, down)
            num_h[i] = (gu[i] - gd[i]) / (2 * eps)
        np.testing.assert_allclose(g, num_g, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(h, num_h, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize('preset', ['depthwise', 'symmetric'])
def test_training_loss_non_increasing(preset):
    X, y = _dataset(2, n=120)
    model = gbdt_fit(X, y, GbdtParams(num_trees=30, depth=4, preset=preset))
    hist = np.asarray(model.history)
    assert hist.size == 31
    assert hist[0] == pytest.approx(logistic_loss(y, np.full(y.size, model.base_score)))
    assert np.all(np.diff(hist) <= 1e-12)
    np.testing.assert_allclose(gbdt_decision_function(model, X)[:3],
                               [gbdt_score(model, x) for x in X[:3]])


@pytest.mark.parametrize('preset', ['depthwise', 'symmetric'])
def test_separable_data_reaches_full_accuracy(preset):
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.uniform(-1.0, -0.1, 30), rng.uniform(0.1, 1.0, 30)])
    y = (x > 0).astype(float)
    model = gbdt_fit(x[:, None], y, GbdtParams(num_trees=20, preset=preset))
    proba = gbdt_predict_proba(model, x[:, None])
    assert np.all((proba > 0.5) == (y == 1))


def test_base_score_is_log_odds():
    X, y = _dataset(4)
    model = gbdt_fit(X, y, GbdtParams(num_trees=0))
    p = y.mean()
    assert model.base_score == pytest.approx(np.log(p / (1 - p)))
    np.testing.assert_allclose(gbdt_decision_function(model, X), model.base_score)


def test_fit_errors():
    X, y = _dataset(5)
    with pytest.raises(InsufficientData):
        gbdt_fit(X[:9], y[:9])
    with pytest.raises(SingleClass):
        gbdt_fit(X, np.ones(y.size))
    with pytest.raises(DimensionMismatch):
        gbdt_fit(X, y[:-1])
    model = gbdt_fit(X, y, GbdtParams(num_trees=2))
    with pytest.raises(DimensionMismatch):
        gbdt_decision_function(model, X[:, :2])


def test_fit_is_deterministic():
    X, y = _dataset(6)
    a = gbdt_decision_function(gbdt_fit(X, y, GbdtParams(num_trees=5)), X)
    b = gbdt_decision_function(gbdt_fit(X, y, GbdtParams(num_trees=5)), X)
    np.testing.assert_array_equal(a, b)


# ── 池化 ─────────────────────────────────────────────────────

def test_pool_features_mean_and_population_std():
    values = np.array([[1.0, 10.0], [3.0, 10.0], [5.0, 16.0]])
    pooled = pool_features(FeatureMatrix(values, FeatureConfig(kind='mfcc'), 'u'))
    assert pooled.dim == 4
    np.testing.assert_allclose(pooled.values, [3.0, 12.0, np.std([1, 3, 5]), np.std([10, 10, 16])])
