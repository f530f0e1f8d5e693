# -*- coding: utf-8 -*-
import numpy as np
import pytest

from core.errors import MissingClass
from core.metrics import (CostParams, ScoreEntry, ScoreSet, beta, det_curve, eer, eer_threshold,
                          evaluate, format_report, min_dcf, per_attack_breakdown)

HAND = ScoreSet.from_arrays([0.9, 0.4], [0.8, 0.1])


def _naive_det(bona, spoof):
    taus = [-np.inf] + sorted(set(bona) | set(spoof)) + [np.inf]
    pm = [sum(b < t for b in bona) / len(bona) for t in taus]
    pf = [sum(s >= t for s in spoof) / len(spoof) for t in taus]
    return taus, np.array(pm), np.array(pf)


def _naive_eer(pm, pf):
    for i in range(len(pm)):
        if pm[i] >= pf[i]:
            if pm[i] == pf[i]:
                return pm[i]
            d0, d1 = pm[i - 1] - pf[i - 1], pm[i] - pf[i]
            t = d0 / (d0 - d1)
            return pm[i - 1] + t * (pm[i] - pm[i - 1])
    raise AssertionError("曲线必然在 +∞ 处相交")


def test_beta_default():
    # 0.95 / 0.5 在浮点下是精确的
    assert beta() == 1.9
    assert beta(CostParams(1.0, 1.0, 0.5)) == 1.0


def test_cost_params_validation():
    with pytest.raises(ValueError):
        CostParams(0.0, 10.0, 0.05)
    with pytest.raises(ValueError):
        CostParams(1.0, 10.0, 1.0)


def test_hand_example():
    curve = det_curve(HAND)
    assert (0.5, 0.5) in [(m, f) for _, m, f in curve.points()]
    assert min_dcf(HAND) == pytest.approx(0.5)
    assert eer(HAND) == pytest.approx(0.5)
    report = evaluate(HAND)
    assert (report.n_bonafide, report.n_spoof) == (2, 2)
    assert format_report(report) == "minDCF 0.500, EER 50.00% (bonafide 2, spoof 2)"


def test_curve_endpoints():
    curve = det_curve(HAND)
    assert curve.thresholds[0] == -np.inf and curve.thresholds[-1] == np.inf
    assert (curve.p_miss[0], curve.p_fa[0]) == (0.0, 1.0)
    assert (curve.p_miss[-1], curve.p_fa[-1]) == (1.0, 0.0)
    assert np.all(np.diff(curve.p_miss) >= 0) and np.all(np.diff(curve.p_fa) <= 0)


def test_inverted_and_separable():
    inverted = ScoreSet.from_arrays([0.1, 0.2], [0.8, 0.9])
    assert min_dcf(inverted) == pytest.approx(1.0)
    assert eer(inverted) == pytest.approx(1.0)
    separable = ScoreSet.from_arrays([0.8, 0.9], [0.1, 0.2])
    assert min_dcf(separable) == 0.0
    assert eer(separable) == 0.0


@pytest.mark.parametrize('seed', range(3))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    bona = np.round(rng.normal(1.0, 1.0, 400), 2)
    spoof = np.round(rng.normal(-0.5, 1.2, 600), 2)
    scores = ScoreSet.from_arrays(bona, spoof)
    taus, pm, pf = _naive_det(bona.tolist(), spoof.tolist())
    curve = det_curve(scores)
    np.testing.assert_array_equal(curve.thresholds, taus)
    np.testing.assert_allclose(curve.p_miss, pm)
    np.testing.assert_allclose(curve.p_fa, pf)
    params = CostParams(1.0, 10.0, 0.05)
    assert min_dcf(scores, params) == pytest.approx(np.min(beta(params) * pm + pf))
    assert eer(scores) == pytest.approx(_naive_eer(pm, pf))
    assert 0.0 <= min_dcf(scores) <= 1.0


def test_min_dcf_never_exceeds_one():
    rng = np.random.default_rng(9)
    for _ in range(20):
        scores = ScoreSet.from_arrays(rng.standard_normal(7), rng.standard_normal(5))
        assert min_dcf(scores, CostParams(1.0, 1.0, 0.3)) <= 1.0


def test_missing_class():
    with pytest.raises(MissingClass):
        evaluate(ScoreSet([ScoreEntry('a', 0.3, 'bonafide')]))
    with pytest.raises(MissingClass):
        eer(ScoreSet([ScoreEntry('a', 0.3, 'spoof')]))


def test_score_set_rejects_bad_entries():
    with pytest.raises(ValueError):
        ScoreSet([ScoreEntry('a', 0.3, 'genuine')])
    with pytest.raises(ValueError):
        ScoreSet([ScoreEntry('a', float('nan'), 'spoof')])


def test_eer_threshold_is_a_curve_threshold():
    assert eer_threshold(HAND) == pytest.approx(0.8)


def test_per_attack_breakdown():
    scores = ScoreSet([
        ScoreEntry('b1', 0.9, 'bonafide'), ScoreEntry('b2', 0.7, 'bonafide'),
        ScoreEntry('s1', 0.1, 'spoof'), ScoreEntry('s2', 0.2, 'spoof'),
        ScoreEntry('s3', 0.95, 'spoof'), ScoreEntry('s4', 0.99, 'spoof'),
    ])
    out = per_attack_breakdown(scores, {'s1': 'A01', 's2': 'A01', 's3': 'A02', 's4': 'A02'})
    assert list(out) == ['A01', 'A02']
    assert out['A01'].eer == 0.0 and out['A01'].n_spoof == 2 and out['A01'].n_bonafide == 2
    assert out['A02'].eer == pytest.approx(1.0)


# ── 随机集合上的蛮力对照与不变性 ───────────────────────────────

def _random_sets(seed, count):
    """count 组随机分数集合，总数 ≤ 200；半数取一位小数以制造平分"""
    rng = np.random.default_rng(seed)
    for i in range(count):
        n_b, n_s = rng.integers(1, 101, size=2)
        bona = rng.normal(rng.uniform(-1, 2), rng.uniform(0.3, 2.0), n_b)
        spoof = rng.normal(rng.uniform(-1, 2), rng.uniform(0.3, 2.0), n_s)
        if i % 2:
            bona, spoof = np.round(bona, 1), np.round(spoof, 1)
        yield bona, spoof


def _sweep(bona, spoof):
    """O(n²) 阈值扫描：每个阈值直接数一遍"""
    taus = np.concatenate([[-np.inf], np.unique(np.concatenate([bona, spoof])), [np.inf]])
    pm = (bona[None, :] < taus[:, None]).sum(axis=1) / bona.size
    pf = (spoof[None, :] >= taus[:, None]).sum(axis=1) / spoof.size
    return pm, pf


def test_thousand_random_sets_match_sweep():
    params = CostParams(1.0, 10.0, 0.05)
    for bona, spoof in _random_sets(2024, 1000):
        scores = ScoreSet.from_arrays(bona, spoof)
        pm, pf = _sweep(bona, spoof)
        assert abs(min_dcf(scores, params) - np.min(beta(params) * pm + pf)) <= 1e-12
        assert abs(eer(scores) - _naive_eer(pm, pf)) <= 1e-12


def test_monotone_transform_keeps_metrics():
    for bona, spoof in _random_sets(7, 50):
        base = ScoreSet.from_arrays(bona, spoof)
        for f in (lambda s: 2.0 * s - 3.0, lambda s: np.exp(0.5 * s)):
            moved = ScoreSet.from_arrays(f(bona), f(spoof))
            assert min_dcf(moved) == min_dcf(base)
            assert eer(moved) == eer(base)


def test_label_swap_mirrors_curve():
    # 交换标签并取负分数：DET 曲线关于对角线镜像，EER 与 β = 1 时的 minDCF 不变
    even = CostParams(1.0, 1.0, 0.5)
    for bona, spoof in _random_sets(11, 100):
        base = ScoreSet.from_arrays(bona, spoof)
        swapped = ScoreSet.from_arrays(-spoof, -bona)
        assert eer(swapped) == pytest.approx(eer(base), abs=1e-12)
        assert min_dcf(swapped, even) == pytest.approx(min_dcf(base, even), abs=1e-12)


def test_entry_order_does_not_matter():
    rng = np.random.default_rng(3)
    for bona, spoof in _random_sets(5, 20):
        entries = ScoreSet.from_arrays(bona, spoof).entries
        shuffled = ScoreSet([entries[i] for i in rng.permutation(len(entries))])
        assert evaluate(shuffled) == evaluate(ScoreSet(entries))
        np.testing.assert_array_equal(det_curve(shuffled).p_miss, det_curve(ScoreSet(entries)).p_miss)
