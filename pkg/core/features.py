# -*- coding: utf-8 -*-
"""倒谱特征提取 — 纯函数，无 UI 依赖

- MFCC / LFCC：功率谱 → 三角滤波器组 → 对数 → 正交 DCT-II
- CQCC：常 Q 变换 → 对数功率 → 几何轴到线性轴的均匀重采样 → DCT-II
- Δ / ΔΔ：±2 帧回归窗，两端复制边缘帧
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy.signal import windows

from core.audio_io import AudioClip, FrameMatrix, frame_and_window, ms_to_samples
from core.errors import DegenerateBand, WindowExceedsSignal
from core.hashing import config_hash

logger = logging.getLogger(__name__)

FEATURE_KINDS = ('mfcc', 'lfcc', 'cqcc')
WINDOW_KINDS = ('hamming', 'hann', 'rectangular')
DYNAMICS = {
    'static': 1,
    'static+delta': 2,
    'static+delta+delta2': 3,
}
DELTA_SPAN = 2

# 单次 GEMM 操作数的元素上限（float64），限制 CQT 的峰值内存
_CQT_BLOCK_ELEMS = 1 << 22


# ── 配置与结果类型 ───────────────────────────────────────────

_FLOAT_FIELDS = ('log_floor', 'frame_ms', 'hop_ms', 'preemph', 'fmin', 'fmax')

@dataclass(frozen=True)
class FeatureConfig:
    kind: str = 'mfcc'
    num_ceps: int = 20
    include_c0: bool = False
    dynamics: str = 'static+delta+delta2'
    num_filters: int = 40
    cqt_bins_per_octave: int = 96
    cqt_octaves: int = 9
    resample_period: int = 16
    log_floor: float = 1e-10
    # 分帧
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    window: str = 'hamming'
    preemph: float = 0.97
    fft_size: int = 512
    fmin: float = 0.0
    fmax: float = None

    def __post_init__(self):
        # 25 与 25.0 须得到同一缓存键
        for name in _FLOAT_FIELDS:
            value = getattr(self, name)
            if value is not None and not isinstance(value, float):
                object.__setattr__(self, name, float(value))
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"未知特征类型: {self.kind}（可选 {', '.join(FEATURE_KINDS)}）")
        if self.dynamics not in DYNAMICS:
            raise ValueError(f"未知动态类型: {self.dynamics}（可选 {', '.join(DYNAMICS)}）")
        if self.window not in WINDOW_KINDS:
            raise ValueError(f"未知窗函数: {self.window}")
        if self.num_ceps < 1:
            raise ValueError("num_ceps 至少为 1")
        if not self.log_floor > 0:
            raise ValueError("log_floor 必须为正")
        # 不含 c0 时取 c1..c_num_ceps，需要多一个带
        need = self.num_ceps + (0 if self.include_c0 else 1)
        if self.kind == 'cqcc':
            if self.cqt_bins_per_octave < 1 or self.cqt_octaves < 1 or self.resample_period < 1:
                raise ValueError("CQT 几何参数必须为正整数")
            if need > self.resample_period * self.cqt_octaves:
                raise ValueError(
                    f"num_ceps={self.num_ceps} 超过均匀重采样点数 "
                    f"{self.resample_period * self.cqt_octaves}")
        elif need > self.num_filters:
            raise ValueError(f"num_ceps={self.num_ceps} 超过滤波器个数 {self.num_filters}")

    @property
    def dim(self) -> int:
        return self.num_ceps * DYNAMICS[self.dynamics]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'FeatureConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"FeatureConfig 未知字段: {', '.join(sorted(unknown))}")
        return cls(**data)

    def with_overrides(self, **overrides) -> 'FeatureConfig':
        return replace(self, **overrides)

    @property
    def hash(self) -> int:
        return config_hash(self.to_dict())


@dataclass
class FeatureMatrix:
    values: np.ndarray          # [num_frames × dim]
    config: FeatureConfig
    utt_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("FeatureMatrix.values 必须是二维数组")

    @property
    def num_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


# ── 频率刻度 ─────────────────────────────────────────────────

def mel_scale(freq_hz):
    """HTK 约定：mel = 2595·log10(1 + f/700)"""
    f = np.asarray(freq_hz, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("频率不能为负")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(mel):
    m = np.asarray(mel, dtype=np.float64)
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


# ── 滤波器组 ─────────────────────────────────────────────────

def filter_edges(scale: str, num_filters: int, fmin: float, fmax: float) -> np.ndarray:
    """num_filters+2 个边界点（Hz），在所选刻度上等距"""
    if scale == 'mel':
        return mel_to_hz(np.linspace(mel_scale(fmin), mel_scale(fmax), num_filters + 2))
    if scale == 'linear':
        return np.linspace(fmin, fmax, num_filters + 2)
    raise ValueError(f"未知刻度: {scale}")


@lru_cache(maxsize=32)
def _cached_filterbank(scale, num_filters, fft_size, sample_rate_hz, fmin, fmax):
    edges = filter_edges(scale, num_filters, fmin, fmax)
    centers = edges[1:-1]
    center_bins = np.round(centers * fft_size / sample_rate_hz).astype(int)
    if np.any(np.diff(center_bins) == 0):
        k = int(np.flatnonzero(np.diff(center_bins) == 0)[0])
        raise DegenerateBand(
            f"滤波器 {k} 与 {k + 1} 的中心落在同一 FFT bin {center_bins[k]}"
            f"（fft_size={fft_size} 过小）")

    bin_hz = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    lo, c, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz[None, :] - lo) / (c - lo)
    falling = (hi - bin_hz[None, :]) / (hi - c)
    fb = np.maximum(0.0, np.minimum(rising, falling))

    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if empty.size:
        raise DegenerateBand(f"滤波器 {int(empty[0])} 没有覆盖任何 FFT bin")
    fb.setflags(write=False)
    return fb


def build_filterbank(scale: str, num_filters: int, fft_size: int, sample_rate_hz: int,
                     fmin: float = 0.0, fmax: float = None) -> np.ndarray:
    """三角滤波器组 [num_filters × (fft_size/2+1)]

    相邻滤波器恰好在彼此中心处归零；返回的矩阵只读，可在线程间共享。
    """
    if fmax is None:
        fmax = sample_rate_hz / 2
    if not (0 <= fmin < fmax <= sample_rate_hz / 2):
        raise ValueError(f"需要 0 ≤ fmin < fmax ≤ fs/2，实际 fmin={fmin}, fmax={fmax}")
    if num_filters < 1 or fft_size < 2:
        raise ValueError("num_filters 与 fft_size 必须为正")
    return _cached_filterbank(scale, int(num_filters), int(fft_size), int(sample_rate_hz),
                              float(fmin), float(fmax))


def power_spectrum(frames: np.ndarray, fft_size: int) -> np.ndarray:
    if frames.shape[1] > fft_size:
        raise ValueError(f"帧长 {frames.shape[1]} 超过 FFT 点数 {fft_size}")
    spec = sp_fft.rfft(frames, n=fft_size, axis=1)
    return (spec.real ** 2 + spec.imag ** 2) / fft_size


def select_ceps(cepstra: np.ndarray, num_ceps: int, include_c0: bool) -> np.ndarray:
    start = 0 if include_c0 else 1
    return cepstra[:, start:start + num_ceps]


def log_dct(energies: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    logs = np.log(np.maximum(energies, cfg.log_floor))
    return sp_fft.dct(logs, type=2, norm='ortho', axis=1)


def filterbank_cepstra(frames: FrameMatrix, fb: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """MFCC/LFCC 公共管线，返回静态倒谱 [num_frames × num_ceps]"""
    energies = power_spectrum(frames.frames, cfg.fft_size) @ fb.T
    return select_ceps(log_dct(energies, cfg), cfg.num_ceps, cfg.include_c0)


def _cepstral(frames: FrameMatrix, cfg: FeatureConfig, sample_rate_hz: int,
              scale: str, expected_kind: str, utt_id: str) -> FeatureMatrix:
    if cfg.kind != expected_kind:
        raise ValueError(f"配置类型为 {cfg.kind}，不能用于 {expected_kind}")
    fb = build_filterbank(scale, cfg.num_filters, cfg.fft_size, sample_rate_hz,
                          cfg.fmin, cfg.fmax)
    static = FeatureMatrix(filterbank_cepstra(frames, fb, cfg), cfg, utt_id)
    return stack_dynamics(static, cfg.dynamics)


def mfcc(frames: FrameMatrix, cfg: FeatureConfig, sample_rate_hz: int,
         utt_id: str = "") -> FeatureMatrix:
    return _cepstral(frames, cfg, sample_rate_hz, 'mel', 'mfcc', utt_id)


def lfcc(frames: FrameMatrix, cfg: FeatureConfig, sample_rate_hz: int,
         utt_id: str = "") -> FeatureMatrix:
    return _cepstral(frames, cfg, sample_rate_hz, 'linear', 'lfcc', utt_id)


# ── 常 Q 变换 ────────────────────────────────────────────────

def cqt_frequencies(bins_per_octave: int, octaves: int, fmax: float) -> np.ndarray:
    """f_k = fmin·2^(k/B)，fmin = fmax / 2^octaves"""
    fmin = fmax / 2.0 ** octaves
    return fmin * 2.0 ** (np.arange(bins_per_octave * octaves) / bins_per_octave)


def cqt_window_lengths(freqs: np.ndarray, bins_per_octave: int, sample_rate_hz: int) -> np.ndarray:
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    return np.ceil(q * sample_rate_hz / freqs).astype(int)


def _bin_chunks(lengths: np.ndarray):
    """按窗长把相邻频点分组（约半个倍频程一组），每组核矩阵 Lc × 2nb 不超过内存上限"""
    chunks = []
    k = 0
    while k < len(lengths):
        lc = int(lengths[k])
        stop = min(len(lengths), k + max(1, _CQT_BLOCK_ELEMS // (2 * lc)))
        end = k + 1
        while end < stop and lengths[end] * 10 >= lc * 7:
            end += 1
        chunks.append((k, end, lc))
        k = end
    return chunks


def cqt(clip: AudioClip, bins_per_octave: int = 96, octaves: int = 9,
        fmax: float = None, hop_len: int = None) -> np.ndarray:
    """常 Q 变换，返回复数矩阵 [num_frames × num_bins]

    帧中心 m·hop（m = 0 … ⌈L/hop⌉−1），两端补零；
    X_k(m) = (1/N_k) Σ_n x[m·hop − ⌊N_k/2⌋ + n]·w_k[n]·e^{−2πi f_k n/fs}，w_k 为对称 Hann 窗。
    """
    fs = clip.sample_rate_hz
    if fmax is None:
        fmax = fs / 2
    if fmax > fs / 2:
        raise ValueError(f"fmax={fmax} 超过奈奎斯特频率 {fs / 2}")
    if hop_len is None:
        hop_len = ms_to_samples(10.0, fs)
    freqs = cqt_frequencies(bins_per_octave, octaves, fmax)
    if freqs[0] <= 0:
        raise ValueError("fmin 必须为正")
    lengths = cqt_window_lengths(freqs, bins_per_octave, fs)

    x = clip.samples
    n_samples = x.shape[0]
    n_max = int(lengths[0])
    if n_max > n_samples:
        raise WindowExceedsSignal(
            f"{clip.utt_id or '片段'}: 最长 CQT 窗 {n_max} 个样本超过片段长度 {n_samples}")

    n_frames = -(-n_samples // hop_len)
    pad_left = n_max // 2
    padded = np.concatenate([np.zeros(pad_left), x, np.zeros(n_max - n_max // 2 + 1)])
    out = np.empty((n_frames, freqs.size), dtype=np.complex128)

    for k0, k1, lc in _bin_chunks(lengths):
        nb = k1 - k0
        kernel = np.zeros((lc, 2 * nb))
        for j, k in enumerate(range(k0, k1)):
            nk = int(lengths[k])
            off = lc // 2 - nk // 2
            n = np.arange(nk)
            w = windows.hann(nk, sym=True) / nk
            phase = 2.0 * np.pi * freqs[k] * n / fs
            kernel[off:off + nk, j] = w * np.cos(phase)
            kernel[off:off + nk, nb + j] = -w * np.sin(phase)

        view = sliding_window_view(padded, lc)
        starts = pad_left - lc // 2 + hop_len * np.arange(n_frames)
        step = max(1, _CQT_BLOCK_ELEMS // lc)
        for m0 in range(0, n_frames, step):
            seg = view[starts[m0:m0 + step]]
            prod = seg @ kernel
            out[m0:m0 + step, k0:k1] = prod[:, :nb] + 1j * prod[:, nb:]
    return out


# ── CQCC ─────────────────────────────────────────────────────

def uniform_frequencies(freqs: np.ndarray, num_points: int) -> np.ndarray:
    """在 [f_0, f_last] 上等距取 num_points 个点"""
    return np.linspace(freqs[0], freqs[-1], num_points)


def interpolate_spectrum(values: np.ndarray, knots: np.ndarray, query: np.ndarray) -> np.ndarray:
    """逐帧线性插值：values [num_frames × len(knots)] → [num_frames × len(query)]

    查询点落在节点上时结果与原值完全相同。
    """
    knots = np.asarray(knots, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    idx = np.clip(np.searchsorted(knots, query, side='right') - 1, 0, knots.size - 2)
    t = (query - knots[idx]) / (knots[idx + 1] - knots[idx])
    return (1.0 - t) * values[:, idx] + t * values[:, idx + 1]


def cqcc(clip: AudioClip, cfg: FeatureConfig) -> FeatureMatrix:
    if cfg.kind != 'cqcc':
        raise ValueError(f"配置类型为 {cfg.kind}，不能用于 cqcc")
    fmax = cfg.fmax if cfg.fmax is not None else clip.sample_rate_hz / 2
    hop_len = max(1, ms_to_samples(cfg.hop_ms, clip.sample_rate_hz))
    spec = cqt(clip, cfg.cqt_bins_per_octave, cfg.cqt_octaves, fmax, hop_len)

    log_power = np.log(np.maximum(spec.real ** 2 + spec.imag ** 2, cfg.log_floor))
    freqs = cqt_frequencies(cfg.cqt_bins_per_octave, cfg.cqt_octaves, fmax)
    uniform = uniform_frequencies(freqs, cfg.resample_period * cfg.cqt_octaves)
    resampled = interpolate_spectrum(log_power, freqs, uniform)

    cepstra = sp_fft.dct(resampled, type=2, norm='ortho', axis=1)
    static = FeatureMatrix(select_ceps(cepstra, cfg.num_ceps, cfg.include_c0), cfg, clip.utt_id)
    return stack_dynamics(static, cfg.dynamics)


# ── 动态特征 ─────────────────────────────────────────────────

def deltas(values: np.ndarray, span: int = DELTA_SPAN) -> np.ndarray:
    """Δ_t = Σ_{n=1..span} n·(c_{t+n} − c_{t−n}) / (2·Σ n²)，边缘复制"""
    n_frames = values.shape[0]
    padded = np.pad(values, ((span, span), (0, 0)), mode='edge')
    denom = 2.0 * sum(n * n for n in range(1, span + 1))
    out = np.zeros_like(values)
    for n in range(1, span + 1):
        out += n * (padded[span + n:span + n + n_frames] - padded[span - n:span - n + n_frames])
    return out / denom


def stack_dynamics(static: FeatureMatrix, dynamics: str) -> FeatureMatrix:
    """列顺序 [静态 | Δ | ΔΔ]"""
    if dynamics not in DYNAMICS:
        raise ValueError(f"未知动态类型: {dynamics}")
    if static.num_frames < 1:
        raise ValueError("至少需要一帧")
    blocks = [static.values]
    if DYNAMICS[dynamics] >= 2:
        blocks.append(deltas(static.values))
    if DYNAMICS[dynamics] >= 3:
        blocks.append(deltas(blocks[1]))
    cfg = static.config
    if cfg.dynamics != dynamics:
        cfg = replace(cfg, dynamics=dynamics)
    return FeatureMatrix(np.hstack(blocks), cfg, static.utt_id)


# ── 分派 ─────────────────────────────────────────────────────

def extract_features(clip: AudioClip, cfg: FeatureConfig) -> FeatureMatrix:
    """按 cfg.kind 选择提取器"""
    if cfg.kind == 'cqcc':
        feats = cqcc(clip, cfg)
    else:
        frames = frame_and_window(clip, cfg.frame_ms, cfg.hop_ms, cfg.window, cfg.preemph)
        extractor = mfcc if cfg.kind == 'mfcc' else lfcc
        feats = extractor(frames, cfg, clip.sample_rate_hz, clip.utt_id)
    logger.debug("%s: %s %d×%d", clip.utt_id, cfg.kind, feats.num_frames, feats.dim)
    return feats
