# -*- coding: utf-8 -*-
"""检测指标 — 归一化 DCF、minDCF、EER

判决规则：score ≥ τ 判为 bonafide（得分越高越像真实语音）。
阈值取 −∞、每个不同得分值、+∞；
p_miss = bonafide 中 score < τ 的比例，p_fa = spoof 中 score ≥ τ 的比例。
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from core.errors import MissingClass

logger = logging.getLogger(__name__)

LABELS = ('bonafide', 'spoof')


# ── 数据类型 ─────────────────────────────────────────────────

@dataclass(frozen=True)
class ScoreEntry:
    utt_id: str
    score: float
    label: str


@dataclass
class ScoreSet:
    entries: list

    def __post_init__(self):
        self.entries = [e if isinstance(e, ScoreEntry) else ScoreEntry(*e) for e in self.entries]
        for e in self.entries:
            if e.label not in LABELS:
                raise ValueError(f"{e.utt_id}: 未知标签 {e.label}")
            if not np.isfinite(e.score):
                raise ValueError(f"{e.utt_id}: 得分不是有限值")

    @classmethod
    def from_arrays(cls, bonafide, spoof) -> 'ScoreSet':
        entries = [ScoreEntry(f"b{i}", float(s), 'bonafide') for i, s in enumerate(bonafide)]
        entries += [ScoreEntry(f"s{i}", float(s), 'spoof') for i, s in enumerate(spoof)]
        return cls(entries)

    def scores_of(self, label: str) -> np.ndarray:
        return np.array([e.score for e in self.entries if e.label == label], dtype=np.float64)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class CostParams:
    c_miss: float = 1.0
    c_fa: float = 10.0
    pi_spf: float = 0.05

    def __post_init__(self):
        if not (self.c_miss > 0 and self.c_fa > 0):
            raise ValueError("c_miss 与 c_fa 必须为正")
        if not 0 < self.pi_spf < 1:
            raise ValueError("pi_spf 必须在 (0, 1) 内")


@dataclass
class DetCurve:
    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray

    def points(self):
        return list(zip(self.thresholds.tolist(), self.p_miss.tolist(), self.p_fa.tolist()))


@dataclass(frozen=True)
class MetricReport:
    min_dcf: float
    eer: float
    n_bonafide: int
    n_spoof: int

    def as_dict(self) -> dict:
        return asdict(self)


# ── 指标 ─────────────────────────────────────────────────────

def beta(params: CostParams = CostParams()) -> float:
    """β = c_miss·(1 − π_spf) / (c_fa·π_spf)"""
    return params.c_miss * (1.0 - params.pi_spf) / (params.c_fa * params.pi_spf)


def _split(scores: ScoreSet):
    bona = np.sort(scores.scores_of('bonafide'))
    spoof = np.sort(scores.scores_of('spoof'))
    if bona.size == 0 or spoof.size == 0:
        missing = 'bonafide' if bona.size == 0 else 'spoof'
        raise MissingClass(f"分数集合中没有 {missing} 条目")
    return bona, spoof


def det_curve(scores: ScoreSet) -> DetCurve:
    bona, spoof = _split(scores)
    distinct = np.unique(np.concatenate([bona, spoof]))
    thresholds = np.concatenate([[-np.inf], distinct, [np.inf]])
    p_miss = np.searchsorted(bona, thresholds, side='left') / bona.size
    p_fa = (spoof.size - np.searchsorted(spoof, thresholds, side='left')) / spoof.size
    return DetCurve(thresholds, p_miss, p_fa)


def min_dcf(scores: ScoreSet, params: CostParams = CostParams()) -> float:
    """min_τ β·p_miss(τ) + p_fa(τ)；接受全部的端点给出 1，因此结果 ≤ 1"""
    curve = det_curve(scores)
    return float(np.min(beta(params) * curve.p_miss + curve.p_fa))


def _eer_index(curve: DetCurve):
    d = curve.p_miss - curve.p_fa
    i = int(np.argmax(d >= 0))
    return i, d


def eer(scores: ScoreSet) -> float:
    """p_miss − p_fa 首次 ≥ 0 处；未恰好相等时与前一点线性插值"""
    curve = det_curve(scores)
    i, d = _eer_index(curve)
    if d[i] == 0:
        return float(curve.p_miss[i])
    t = -d[i - 1] / (d[i] - d[i - 1])
    return float(curve.p_miss[i - 1] + t * (curve.p_miss[i] - curve.p_miss[i - 1]))


def eer_threshold(scores: ScoreSet) -> float:
    """EER 所在工作点的阈值（用于日志）"""
    curve = det_curve(scores)
    i, _ = _eer_index(curve)
    return float(curve.thresholds[i])


def evaluate(scores: ScoreSet, params: CostParams = CostParams()) -> MetricReport:
    bona, spoof = _split(scores)
    return MetricReport(min_dcf=min_dcf(scores, params), eer=eer(scores),
                        n_bonafide=int(bona.size), n_spoof=int(spoof.size))


def per_attack_breakdown(scores: ScoreSet, attack_of: dict,
                         params: CostParams = CostParams()) -> dict:
    """每个攻击的 spoof 子集对全部 bonafide 单独评测，返回 {attack_id: MetricReport}"""
    bona = [e for e in scores.entries if e.label == 'bonafide']
    groups = {}
    for e in scores.entries:
        if e.label == 'spoof':
            groups.setdefault(attack_of.get(e.utt_id, '?'), []).append(e)
    return {attack: evaluate(ScoreSet(bona + groups[attack]), params)
            for attack in sorted(groups)}


def format_report(report: MetricReport) -> str:
    """表 2 风格：minDCF 三位小数，EER 百分比两位小数"""
    return (f"minDCF {report.min_dcf:.3f}, EER {100.0 * report.eer:.2f}% "
            f"(bonafide {report.n_bonafide}, spoof {report.n_spoof})")
