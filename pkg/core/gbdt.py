# -*- coding: utf-8 -*-
"""梯度提升树检测器 — 逻辑损失、二阶近似、两种生长方式

- depthwise：每个节点独立选择最佳分裂
- symmetric：同一层所有节点共享一个 (特征, 阈值)，增益为各节点之和
- 样本满足 x < threshold 时进入左子树；候选阈值为相邻不同取值的中点
- 增益相同时取特征编号最小者，再取阈值最小者
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from core.errors import DimensionMismatch, EmptyFeatures, InsufficientData, SingleClass
from core.features import FeatureMatrix

logger = logging.getLogger(__name__)

PRESETS = ('depthwise', 'symmetric')
LEAF = -1
# 累加误差量级内的“增益”视为 0
_MIN_GAIN = 1e-12


# ── 池化 ─────────────────────────────────────────────────────

@dataclass
class PooledVector:
    values: np.ndarray          # [逐维均值 | 逐维标准差]
    utt_id: str = ""

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def pool_features(features: FeatureMatrix) -> PooledVector:
    """逐维均值 + 总体标准差，把变长帧序列变成定长向量"""
    values = np.asarray(features.values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise EmptyFeatures(f"{features.utt_id or '特征'}: 没有任何帧")
    mean = values.mean(axis=0)
    std = np.sqrt(np.mean((values - mean) ** 2, axis=0))
    return PooledVector(np.concatenate([mean, std]), features.utt_id)


# ── 模型类型 ─────────────────────────────────────────────────

@dataclass
class Tree:
    feature: np.ndarray         # int，叶子为 -1
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.feature.shape[0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[idx]
            internal = feat != LEAF
            if not internal.any():
                return self.value[idx]
            go_left = X[rows, np.maximum(feat, 0)] < self.threshold[idx]
            nxt = np.where(go_left, self.left[idx], self.right[idx])
            idx = np.where(internal, nxt, idx)


@dataclass
class GbdtParams:
    num_trees: int = 100
    depth: int = 6
    learning_rate: float = 0.1
    lam: float = 1.0
    preset: str = 'depthwise'
    seed: int = 42

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"未知生长方式: {self.preset}（可选 {', '.join(PRESETS)}）")
        if self.num_trees < 0 or self.depth < 1:
            raise ValueError("num_trees ≥ 0 且 depth ≥ 1")
        if self.depth > 15:
            raise ValueError("depth 不能超过 15")
        if not self.learning_rate > 0 or self.lam < 0:
            raise ValueError("learning_rate 必须为正，lam 不能为负")


@dataclass
class GbdtModel:
    trees: list
    learning_rate: float
    base_score: float
    preset: str
    dim: int
    feature_config_hash: int = 0
    lam: float = 1.0
    history: list = field(default_factory=list, repr=False, compare=False)


# ── 损失 ─────────────────────────────────────────────────────

def sigmoid(raw):
    return np.exp(-np.logaddexp(0.0, -np.asarray(raw, dtype=np.float64)))


def logistic_loss(y, raw) -> float:
    """平均对数损失：log(1 + e^F) − y·F"""
    y = np.asarray(y, dtype=np.float64)
    raw = np.asarray(raw, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def logistic_grad_hess(y, raw):
    """对原始得分 F 的逐样本一阶/二阶导：g = p − y，h = p(1 − p)"""
    p = sigmoid(raw)
    return p - np.asarray(y, dtype=np.float64), p * (1.0 - p)


# ── 单棵树 ───────────────────────────────────────────────────

def _midpoint(a: float, b: float) -> float:
    mid = 0.5 * (a + b)
    return b if mid <= a else mid


class _LevelScan:
    """一层节点在所有特征上的前缀统计

    grouped: [n × F] 每列先按节点、节点内按特征值排序的样本号
    gain:    [n × F] 把该行及其之前的同节点样本放进左子树时的节点增益
    valid:   该行之后是同节点且取值严格更大的样本（可在此处切分）
    """

    def __init__(self, X, order, nid, n_groups, g, h, lam):
        n, F = X.shape
        cols = np.arange(F)[None, :]
        key_dtype = np.uint8 if n_groups <= 255 else np.uint16
        key = nid.astype(key_dtype)[order]
        perm = np.argsort(key, axis=0, kind='stable')
        self.grouped = np.take_along_axis(order, perm, axis=0)
        self.xs = X[self.grouped, cols]

        counts = np.bincount(nid, minlength=n_groups)
        self.starts = np.concatenate([[0], np.cumsum(counts)])
        self.row_node = np.repeat(np.arange(n_groups), counts)
        G = np.bincount(nid, weights=g, minlength=n_groups)
        H = np.bincount(nid, weights=h, minlength=n_groups)
        self.G, self.H = G, H

        cg = np.cumsum(g[self.grouped], axis=0)
        ch = np.cumsum(h[self.grouped], axis=0)
        zero = np.zeros((1, F))
        base_g = np.vstack([zero, cg])[self.starts[:-1]][self.row_node]
        base_h = np.vstack([zero, ch])[self.starts[:-1]][self.row_node]
        GL = cg - base_g
        HL = ch - base_h
        Gn = G[self.row_node][:, None]
        Hn = H[self.row_node][:, None]
        before = Gn ** 2 / (Hn + lam)
        self.gain = 0.5 * (GL ** 2 / (HL + lam) + (Gn - GL) ** 2 / (Hn - HL + lam) - before)

        self.valid = np.zeros((n, F), dtype=bool)
        same = self.row_node[1:] == self.row_node[:-1]
        self.valid[:-1] = same[:, None] & (self.xs[1:] > self.xs[:-1])


def _best_in_block(gain: np.ndarray, valid: np.ndarray):
    """块内最佳 (行, 特征)；平局取特征最小、行最小"""
    masked = np.where(valid, gain, -np.inf)
    flat = masked.T.ravel()
    if flat.size == 0:
        return None
    best = int(np.argmax(flat))
    rows = masked.shape[0]
    return best % rows, best // rows, float(flat[best])


def _leaf_value(G: float, H: float, lam: float) -> float:
    if H + lam <= 0:
        return 0.0
    return -G / (H + lam)


def _grow_depthwise(X, g, h, depth, lam, order):
    n = X.shape[0]
    feature, threshold, left, right, value = [LEAF], [0.0], [LEAF], [LEAF], [0.0]
    nid = np.zeros(n, dtype=np.int64)
    active = [0]                # 当前层节点 → 树节点编号

    for level in range(depth + 1):
        m = len(active)
        if level == depth:
            G = np.bincount(nid, weights=g, minlength=m + 1)
            H = np.bincount(nid, weights=h, minlength=m + 1)
            for j, node in enumerate(active):
                value[node] = _leaf_value(G[j], H[j], lam)
            break
        # 已成叶子的样本归入末尾的占位组
        scan = _LevelScan(X, order, nid, m + 1, g, h, lam)
        next_active = []
        remap = np.full(m + 1, -1, dtype=np.int64)
        split_info = {}
        for j, node in enumerate(active):
            value[node] = _leaf_value(scan.G[j], scan.H[j], lam)
            a, b = scan.starts[j], scan.starts[j + 1]
            if b - a < 2:
                continue
            best = _best_in_block(scan.gain[a:b], scan.valid[a:b])
            if best is None or best[2] <= _MIN_GAIN:
                continue
            r, f, _gain = best
            thr = _midpoint(scan.xs[a + r, f], scan.xs[a + r + 1, f])
            feature[node], threshold[node] = f, thr
            for side in (left, right):
                side[node] = len(feature)
                feature.append(LEAF)
                threshold.append(0.0)
                left.append(LEAF)
                right.append(LEAF)
                value.append(0.0)
            remap[j] = len(next_active)
            next_active.extend([left[node], right[node]])
            split_info[j] = (f, thr)

        if not next_active:
            break
        new_nid = np.full(n, len(next_active), dtype=np.int64)
        for j, (f, thr) in split_info.items():
            members = nid == j
            go_right = X[:, f] >= thr
            new_nid[members] = remap[j] + go_right[members]
        nid = new_nid
        active = next_active

    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value))


def _grow_symmetric(X, g, h, depth, lam, order):
    n, F = X.shape
    cols = np.arange(F)[None, :]
    xs_glob = X[order, cols]
    valid_glob = np.zeros((n, F), dtype=bool)
    valid_glob[:-1] = xs_glob[1:] > xs_glob[:-1]

    nid = np.zeros(n, dtype=np.int64)
    splits = []
    for level in range(depth):
        m = 1 << level
        scan = _LevelScan(X, order, nid, m, g, h, lam)
        # 逐样本增益增量，沿全局排序累加得到每个共享阈值下各节点增益之和
        prev = np.vstack([np.zeros((1, F)), scan.gain[:-1]])
        prev[scan.starts[:-1][scan.starts[:-1] < n]] = 0.0
        delta = np.empty((n, F))
        delta[scan.grouped, cols] = scan.gain - prev
        total = np.cumsum(delta[order, cols], axis=0)
        best = _best_in_block(total, valid_glob)
        if best is None or best[2] <= _MIN_GAIN:
            break
        r, f, _gain = best
        thr = _midpoint(xs_glob[r, f], xs_glob[r + 1, f])
        splits.append((f, thr))
        nid = 2 * nid + (X[:, f] >= thr)

    levels = len(splits)
    num_nodes = (1 << (levels + 1)) - 1
    feature = np.full(num_nodes, LEAF, dtype=np.int64)
    threshold = np.zeros(num_nodes)
    left = np.full(num_nodes, LEAF, dtype=np.int64)
    right = np.full(num_nodes, LEAF, dtype=np.int64)
    value = np.zeros(num_nodes)
    for level, (f, thr) in enumerate(splits):
        first = (1 << level) - 1
        for idx in range(first, first + (1 << level)):
            feature[idx], threshold[idx] = f, thr
            left[idx], right[idx] = 2 * idx + 1, 2 * idx + 2
    m = 1 << levels
    G = np.bincount(nid, weights=g, minlength=m)
    H = np.bincount(nid, weights=h, minlength=m)
    counts = np.bincount(nid, minlength=m)
    first_leaf = m - 1
    for j in range(m):
        value[first_leaf + j] = _leaf_value(G[j], H[j], lam) if counts[j] else 0.0
    return Tree(feature, threshold, left, right, value)


def presort(X: np.ndarray) -> np.ndarray:
    return np.argsort(X, axis=0, kind='stable')


def fit_tree(X, g, h, depth: int = 6, lam: float = 1.0, preset: str = 'depthwise',
             order: np.ndarray = None) -> Tree:
    """按二阶近似拟合一棵回归树，叶值 −G/(H + λ)"""
    X = np.asarray(X, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if order is None:
        order = presort(X)
    if preset == 'depthwise':
        return _grow_depthwise(X, g, h, depth, lam, order)
    if preset == 'symmetric':
        return _grow_symmetric(X, g, h, depth, lam, order)
    raise ValueError(f"未知生长方式: {preset}")


# ── 训练与打分 ───────────────────────────────────────────────

def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        X = samples.astype(np.float64, copy=False)
    else:
        X = np.array([s.values if isinstance(s, PooledVector) else s for s in samples],
                     dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def gbdt_fit(samples, labels, params: GbdtParams = None,
             feature_config_hash: int = 0) -> GbdtModel:
    """逻辑损失提升：base_score = log(p/(1−p))，每轮对 (g, h) 拟合一棵树

    labels: bonafide = 1，spoof = 0。model.history 记录初始及每轮之后的训练对数损失。
    """
    params = params or GbdtParams()
    X = _as_matrix(samples)
    y = np.asarray(labels, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"样本数 {X.shape[0]} ≠ 标签数 {y.shape[0]}")
    if X.shape[0] < 10:
        raise InsufficientData(f"训练样本只有 {X.shape[0]} 个（至少 10 个）")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("标签必须是 0 或 1")
    prior = float(y.mean())
    if prior in (0.0, 1.0):
        raise SingleClass("训练数据只含一个类别")

    base_score = float(np.log(prior / (1.0 - prior)))
    raw = np.full(X.shape[0], base_score)
    order = presort(X)
    trees = []
    history = [logistic_loss(y, raw)]
    for t in range(params.num_trees):
        g, h = logistic_grad_hess(y, raw)
        tree = fit_tree(X, g, h, params.depth, params.lam, params.preset, order)
        trees.append(tree)
        raw = raw + params.learning_rate * tree.predict(X)
        history.append(logistic_loss(y, raw))
        logger.debug("第 %d 棵树：%d 个节点，训练损失 %.6f", t + 1, tree.num_nodes, history[-1])

    logger.info("GBDT(%s) 训练完成：%d 棵树，训练损失 %.4f → %.4f",
                params.preset, len(trees), history[0], history[-1])
    return GbdtModel(trees=trees, learning_rate=params.learning_rate, base_score=base_score,
                     preset=params.preset, dim=X.shape[1],
                     feature_config_hash=feature_config_hash, lam=params.lam,
                     history=history)


def gbdt_decision_function(model: GbdtModel, samples) -> np.ndarray:
    """批量原始得分：base_score + learning_rate·Σ 树输出"""
    X = _as_matrix(samples)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"输入维度 {X.shape[1]} ≠ 模型维度 {model.dim}")
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        total = total + tree.predict(X)
    return model.base_score + model.learning_rate * total


def gbdt_score(model: GbdtModel, x) -> float:
    return float(gbdt_decision_function(model, [x])[0])


def gbdt_predict_proba(model: GbdtModel, samples) -> np.ndarray:
    return sigmoid(gbdt_decision_function(model, samples))
