# -*- coding: utf-8 -*-
"""GMM 对抗检测器 — k-means++ 初始化、全协方差 EM、对数似然比打分

bonafide 与 spoof 各训练一个 GMM；语音得分为逐帧对数似然比的平均值，
得分越高越像真实语音。
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from core.errors import (DimensionMismatch, EmptyFeatures, InsufficientData,
                         SingularCovariance)
from core.features import FeatureMatrix

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 50
KMEANS_TOL = 1e-6
EM_TOL = 1e-5
REG_FACTOR = 1e-6
MIN_WEIGHT = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


# ── 模型类型 ─────────────────────────────────────────────────

@dataclass
class GmmModel:
    weights: np.ndarray         # [K]
    means: np.ndarray           # [K × D]
    covariances: np.ndarray     # [K × D × D]
    history: list = field(default_factory=list, repr=False, compare=False)
    _chol: np.ndarray = field(default=None, init=False, repr=False, compare=False)
    _log_det: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covariances = np.asarray(self.covariances, dtype=np.float64)
        k, d = self.means.shape
        if self.weights.shape != (k,) or self.covariances.shape != (k, d, d):
            raise ValueError("GMM 参数形状不一致")
        self._chol, self._log_det = _factorize(self.covariances)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def num_components(self) -> int:
        return int(self.means.shape[0])

    def component_log_densities(self, data: np.ndarray) -> np.ndarray:
        """[N × K]：log w_k + log N(x; μ_k, Σ_k)"""
        out = np.empty((data.shape[0], self.num_components))
        for k in range(self.num_components):
            z = linalg.solve_triangular(self._chol[k], (data - self.means[k]).T,
                                        lower=True, check_finite=False)
            maha = np.einsum('ij,ij->j', z, z)
            out[:, k] = -0.5 * (self.dim * _LOG_2PI + self._log_det[k] + maha)
        with np.errstate(divide='ignore'):
            return out + np.log(self.weights)


@dataclass
class GmmPairCm:
    bonafide: GmmModel
    spoof: GmmModel
    feature_config_hash: int = 0

    def __post_init__(self):
        if self.bonafide.dim != self.spoof.dim:
            raise DimensionMismatch(
                f"bonafide 模型维度 {self.bonafide.dim} ≠ spoof 模型维度 {self.spoof.dim}")

    @property
    def dim(self) -> int:
        return self.bonafide.dim


def _factorize(covariances: np.ndarray):
    chols = np.empty_like(covariances)
    log_dets = np.empty(covariances.shape[0])
    for k, cov in enumerate(covariances):
        try:
            chols[k] = linalg.cholesky(cov, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise SingularCovariance(f"第 {k} 个分量协方差不是正定矩阵: {exc}")
        log_dets[k] = 2.0 * np.sum(np.log(np.diag(chols[k])))
    return chols, log_dets


def _as_frames(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("训练数据必须是二维 [帧数 × 维度]")
    return x


# ── k-means ─────────────────────────────────────────────────

def _sq_dist(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centers.T
         + np.sum(centers * centers, axis=1)[None, :])
    return np.maximum(d, 0.0)


def kmeans_init(data, K: int, seed: int = 42) -> np.ndarray:
    """k-means++ 播种 + Lloyd 迭代，返回 [K × D] 质心

    Raises: InsufficientData（不同的帧少于 K 个）
    """
    x = _as_frames(data)
    if K < 1:
        raise ValueError("K 至少为 1")
    if np.unique(x, axis=0).shape[0] < K:
        raise InsufficientData(f"不同的帧少于 K={K} 个")
    rng = np.random.default_rng(seed)

    centers = np.empty((K, x.shape[1]))
    centers[0] = x[rng.integers(x.shape[0])]
    closest = _sq_dist(x, centers[:1])[:, 0]
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = int(np.argmax(closest))
        else:
            idx = int(rng.choice(x.shape[0], p=closest / total))
        centers[k] = x[idx]
        closest = np.minimum(closest, _sq_dist(x, centers[k:k + 1])[:, 0])

    for it in range(KMEANS_MAX_ITER):
        dist = _sq_dist(x, centers)
        labels = np.argmin(dist, axis=1)
        point_dist = dist[np.arange(x.shape[0]), labels]
        new_centers = centers.copy()
        for k in range(K):
            members = labels == k
            if members.any():
                new_centers[k] = x[members].mean(axis=0)
            else:
                # 空簇：移到离自身质心最远的点
                far = int(np.argmax(point_dist))
                new_centers[k] = x[far]
                point_dist[far] = 0.0
        shift = np.max(np.linalg.norm(new_centers - centers, axis=1))
        centers = new_centers
        if shift < KMEANS_TOL:
            logger.debug("k-means 在第 %d 次迭代收敛", it + 1)
            break
    return centers


# ── EM ───────────────────────────────────────────────────────

def _m_step(x: np.ndarray, resp: np.ndarray, prev: GmmModel, reg_factor: float):
    n, d = x.shape
    nk = resp.sum(axis=0)
    weights = np.maximum(nk / n, MIN_WEIGHT)
    weights /= weights.sum()
    K = resp.shape[1]
    means = np.empty((K, d))
    covs = np.empty((K, d, d))
    for k in range(K):
        if nk[k] < 10 * np.finfo(float).eps and prev is not None:
            # 分量已无数据，保持原参数
            means[k] = prev.means[k]
            covs[k] = prev.covariances[k]
            continue
        means[k] = resp[:, k] @ x / nk[k]
        diff = x - means[k]
        cov = (resp[:, k, None] * diff).T @ diff / nk[k]
        cov = 0.5 * (cov + cov.T)
        cov[np.diag_indices(d)] += reg_factor * np.trace(cov) / d
        covs[k] = cov
    return weights, means, covs


def _e_step(model: GmmModel, x: np.ndarray):
    log_dens = model.component_log_densities(x)
    log_norm = logsumexp(log_dens, axis=1)
    return float(np.mean(log_norm)), np.exp(log_dens - log_norm[:, None])


def gmm_fit_em(data, K: int = 2, max_iter: int = 100, seed: int = 42,
               reg_factor: float = REG_FACTOR, tol: float = EM_TOL) -> GmmModel:
    """k-means 初始化的全协方差 EM

    每次 M 步给协方差加 reg_factor·trace/D 的脊项；
    达到 max_iter 或平均对数似然增量 < tol 时停止。
    model.history 记录每次 E 步的平均对数似然（不写入模型文件）。
    """
    x = _as_frames(data)
    n, d = x.shape
    if d < 1:
        raise ValueError("维度至少为 1")
    if n < 10 * K:
        raise InsufficientData(f"{n} 帧不足以训练 K={K} 的 GMM（至少 {10 * K} 帧）")

    centers = kmeans_init(x, K, seed)
    labels = np.argmin(_sq_dist(x, centers), axis=1)
    resp = np.zeros((n, K))
    resp[np.arange(n), labels] = 1.0

    model = GmmModel(*_m_step(x, resp, None, reg_factor))
    ll, resp = _e_step(model, x)
    history = [ll]
    for it in range(max_iter):
        model = GmmModel(*_m_step(x, resp, model, reg_factor))
        ll_new, resp = _e_step(model, x)
        history.append(ll_new)
        if ll_new - ll < tol:
            logger.debug("EM 在第 %d 次迭代收敛，平均对数似然 %.6f", it + 1, ll_new)
            break
        ll = ll_new
    model.history = history
    return model


# ── 打分 ─────────────────────────────────────────────────────

def gmm_log_likelihood_frames(model: GmmModel, frames) -> np.ndarray:
    x = _as_frames(frames)
    if x.shape[1] != model.dim:
        raise DimensionMismatch(f"帧维度 {x.shape[1]} ≠ 模型维度 {model.dim}")
    return logsumexp(model.component_log_densities(x), axis=1)


def gmm_log_likelihood(model: GmmModel, frame) -> float:
    frame = np.asarray(frame, dtype=np.float64).reshape(1, -1)
    return float(gmm_log_likelihood_frames(model, frame)[0])


def gmm_score_utterance(cm: GmmPairCm, features: FeatureMatrix) -> float:
    """(1/T)·Σ_t [log p(f_t|bonafide) − log p(f_t|spoof)]"""
    values = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
    if values.shape[0] == 0:
        raise EmptyFeatures("特征矩阵没有任何帧")
    llr = gmm_log_likelihood_frames(cm.bonafide, values) - gmm_log_likelihood_frames(cm.spoof, values)
    return float(np.mean(llr))


def subsample_frames(frames: np.ndarray, max_frames: int, seed: int) -> np.ndarray:
    """按种子确定性抽取至多 max_frames 帧（保持原顺序）；0 表示不限制"""
    if max_frames <= 0 or frames.shape[0] <= max_frames:
        return frames
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(frames.shape[0], size=max_frames, replace=False))
    return frames[idx]


def gmm_pair_fit(bonafide_frames, spoof_frames, K: int = 2, max_iter: int = 100,
                 seed: int = 42, feature_config_hash: int = 0, max_frames: int = 0,
                 reg_factor: float = REG_FACTOR) -> GmmPairCm:
    bona = subsample_frames(_as_frames(bonafide_frames), max_frames, seed)
    spoof = subsample_frames(_as_frames(spoof_frames), max_frames, seed)
    if bona.shape[1] != spoof.shape[1]:
        raise DimensionMismatch(f"bonafide 维度 {bona.shape[1]} ≠ spoof 维度 {spoof.shape[1]}")
    logger.info("训练 GMM 对：bonafide %d 帧，spoof %d 帧，K=%d", bona.shape[0], spoof.shape[0], K)
    return GmmPairCm(
        bonafide=gmm_fit_em(bona, K, max_iter, seed, reg_factor),
        spoof=gmm_fit_em(spoof, K, max_iter, seed, reg_factor),
        feature_config_hash=feature_config_hash,
    )
