# -*- coding: utf-8 -*-
import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from core.errors import DimensionMismatch, EmptyFeatures, InsufficientData, SingularCovariance
from core.gmm import (GmmModel, GmmPairCm, gmm_fit_em, gmm_log_likelihood,
                      gmm_log_likelihood_frames, gmm_pair_fit, gmm_score_utterance, kmeans_init,
                      subsample_frames)


def _mixture(rng, n, d, K, spread=4.0):
    centers = rng.standard_normal((K, d)) * spread
    labels = rng.integers(K, size=n)
    scales = rng.uniform(0.5, 1.5, size=(K, d))
    return centers[labels] + rng.standard_normal((n, d)) * scales[labels]


@pytest.mark.parametrize('case', range(50))
def test_em_log_likelihood_is_monotone(case):
    rng = np.random.default_rng(1000 + case)
    d = 1 + case % 3
    K = 2 + case % 2
    x = _mixture(rng, 300, d, K)
    model = gmm_fit_em(x, K=K, max_iter=60, seed=case)
    hist = np.asarray(model.history)
    assert hist.size >= 2
    assert np.all(np.diff(hist) >= -1e-8)
    assert np.isclose(model.weights.sum(), 1.0)


def test_single_component_is_closed_form():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((500, 3)) @ np.array([[1.0, 0.3, 0.0], [0.0, 2.0, 0.5], [0.0, 0.0, 0.7]])
    model = gmm_fit_em(x, K=1)
    cov = np.cov(x.T, bias=True)
    cov += np.eye(3) * 1e-6 * np.trace(cov) / 3
    np.testing.assert_allclose(model.weights, [1.0])
    np.testing.assert_allclose(model.means[0], x.mean(axis=0), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(model.covariances[0], cov, rtol=1e-9, atol=1e-12)

    unreg = gmm_fit_em(x, K=1, reg_factor=0.0)
    np.testing.assert_allclose(unreg.covariances[0], np.cov(x.T, bias=True), rtol=1e-9, atol=1e-12)


def test_log_likelihood_matches_scipy():
    rng = np.random.default_rng(2)
    mean = np.array([0.5, -1.0])
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    model = GmmModel([1.0], [mean], [cov])
    frames = rng.standard_normal((20, 2))
    np.testing.assert_allclose(gmm_log_likelihood_frames(model, frames),
                               multivariate_normal(mean, cov).logpdf(frames), rtol=1e-10)
    assert gmm_log_likelihood(model, frames[0]) == pytest.approx(
        multivariate_normal(mean, cov).logpdf(frames[0]))


def test_two_component_density():
    a = multivariate_normal([0.0], [[1.0]])
    b = multivariate_normal([3.0], [[0.25]])
    model = GmmModel([0.3, 0.7], [[0.0], [3.0]], [[[1.0]], [[0.25]]])
    x = np.linspace(-2, 5, 15)[:, None]
    want = np.log(0.3 * a.pdf(x[:, 0]) + 0.7 * b.pdf(x[:, 0]))
    np.testing.assert_allclose(gmm_log_likelihood_frames(model, x), want, rtol=1e-10)


def test_kmeans_finds_separated_clusters():
    rng = np.random.default_rng(3)
    x = np.vstack([rng.standard_normal((100, 2)) * 0.1 + [5.0, 5.0],
                   rng.standard_normal((100, 2)) * 0.1 - [5.0, 5.0]])
    centers = kmeans_init(x, 2, seed=0)
    got = sorted(centers.tolist())
    np.testing.assert_allclose(got[0], x[100:].mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(got[1], x[:100].mean(axis=0), atol=1e-9)


def test_insufficient_data():
    x = np.random.default_rng(4).standard_normal((15, 2))
    with pytest.raises(InsufficientData):
        gmm_fit_em(x, K=2)
    with pytest.raises(InsufficientData):
        kmeans_init(np.ones((40, 2)), 2)


def test_singular_covariance():
    with pytest.raises(SingularCovariance):
        GmmModel([1.0], [[0.0, 0.0]], [np.zeros((2, 2))])


def test_fit_is_deterministic():
    x = _mixture(np.random.default_rng(5), 400, 2, 2)
    a = gmm_fit_em(x, K=2, seed=11)
    b = gmm_fit_em(x, K=2, seed=11)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_pair_scores_have_expected_sign():
    rng = np.random.default_rng(6)
    bona = rng.standard_normal((600, 2))
    spoof = rng.standard_normal((600, 2)) + [3.0, 0.0]
    cm = gmm_pair_fit(bona, spoof, K=2, seed=1, feature_config_hash=99)
    assert cm.feature_config_hash == 99
    assert gmm_score_utterance(cm, rng.standard_normal((50, 2))) > 0
    assert gmm_score_utterance(cm, rng.standard_normal((50, 2)) + [3.0, 0.0]) < 0
    with pytest.raises(EmptyFeatures):
        gmm_score_utterance(cm, np.zeros((0, 2)))
    with pytest.raises(DimensionMismatch):
        gmm_score_utterance(cm, np.zeros((5, 3)))


def test_swapping_models_negates_score():
    rng = np.random.default_rng(8)
    cm = gmm_pair_fit(rng.standard_normal((400, 3)), rng.standard_normal((400, 3)) * 1.5 + 1.0,
                      K=2, seed=2)
    flipped = GmmPairCm(cm.spoof, cm.bonafide)
    for _ in range(5):
        utt = rng.standard_normal((40, 3)) * rng.uniform(0.5, 2.0)
        assert gmm_score_utterance(flipped, utt) == pytest.approx(-gmm_score_utterance(cm, utt),
                                                                   abs=1e-12)


def test_fitted_density_integrates_to_one():
    rng = np.random.default_rng(12)
    data = np.concatenate([rng.normal(-3.0, 0.7, 300), rng.normal(4.0, 1.3, 500)])
    model = gmm_fit_em(data, K=2, seed=0)
    grid = np.linspace(-40.0, 40.0, 80001)
    density = np.exp(gmm_log_likelihood_frames(model, grid))
    assert trapezoid(density, grid) == pytest.approx(1.0, abs=1e-6)


def test_pair_dimension_mismatch():
    one = GmmModel([1.0], [[0.0]], [[[1.0]]])
    two = GmmModel([1.0], [[0.0, 0.0]], [np.eye(2)])
    with pytest.raises(DimensionMismatch):
        GmmPairCm(one, two)


def test_subsample_frames():
    frames = np.arange(100, dtype=float)[:, None]
    a = subsample_frames(frames, 10, seed=3)
    assert a.shape == (10, 1)
    assert np.all(np.diff(a[:, 0]) > 0)
    np.testing.assert_array_equal(a, subsample_frames(frames, 10, seed=3))
    assert subsample_frames(frames, 0, seed=3) is frames
