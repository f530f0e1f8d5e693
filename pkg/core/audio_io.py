# -*- coding: utf-8 -*-
"""音频读写与分帧 — 纯函数，无 UI 依赖

- RIFF/WAVE 读写：PCM 16-bit 与 IEEE float 32-bit，单/双声道，小端
- Kaiser 窗 sinc 多相重采样（β=8，每侧 32 个过零点）
- 预加重 + 分帧 + 加窗
"""

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

import numpy as np
from scipy import signal

from core.errors import ClipTooShort, EmptyAudio, MalformedContainer, UnsupportedEncoding

CANONICAL_RATE = 16000
STANDARD_RATES = (8000, 16000, 22050, 44100, 48000)
WINDOW_KINDS = ('hamming', 'hann', 'rectangular')

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE

_KAISER_BETA = 8.0
_ZERO_CROSSINGS = 32


# ── 数据类型 ──────────────────────────────────────────────────

@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    utt_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip 只接受单声道一维样本")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"采样率必须为正: {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate_hz


@dataclass
class FrameMatrix:
    frames: np.ndarray          # [num_frames × frame_len]，已加窗
    hop_len: int
    window_kind: str = 'hamming'
    sample_rate_hz: int = CANONICAL_RATE
    window: np.ndarray = field(default=None, repr=False)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def frame_len(self) -> int:
        return int(self.frames.shape[1])


# ── WAV 读取 ─────────────────────────────────────────────────

def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise MalformedContainer("fmt 块过短")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack('<HHIIHH', body[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise MalformedContainer("WAVE_FORMAT_EXTENSIBLE 的 fmt 块过短")
        # SubFormat GUID 的前两个字节就是真实格式码
        tag = struct.unpack('<H', body[24:26])[0]
    return tag, channels, rate, block_align, bits


def read_wav(path) -> AudioClip:
    """读取 WAV 为单声道 AudioClip，采样率保持不变。

    PCM16 除以 32768，float32 原样；多声道取平均。
    Raises: MalformedContainer / UnsupportedEncoding / EmptyAudio
    """
    with open(path, 'rb') as f:
        data = f.read()

    if len(data) < 12 or data[:4] != b'RIFF' or data[8:12] != b'WAVE':
        raise MalformedContainer(f"不是 RIFF/WAVE 文件: {path}")
    riff_size = struct.unpack('<I', data[4:8])[0]
    if riff_size + 8 > len(data) or riff_size < 4:
        raise MalformedContainer(f"RIFF 长度字段与文件大小不符: {path}")

    fmt = None
    pcm = None
    pos = 12
    end = riff_size + 8
    while pos + 8 <= end:
        chunk_id = data[pos:pos + 4]
        size = struct.unpack('<I', data[pos + 4:pos + 8])[0]
        body_start = pos + 8
        if body_start + size > end:
            raise MalformedContainer(f"块 {chunk_id!r} 长度越界: {path}")
        body = data[body_start:body_start + size]
        if chunk_id == b'fmt ':
            fmt = _parse_fmt(body)
        elif chunk_id == b'data':
            pcm = body
        pos = body_start + size + (size & 1)   # 奇数长度块有填充字节

    if fmt is None or pcm is None:
        raise MalformedContainer(f"缺少 fmt 或 data 块: {path}")

    tag, channels, rate, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"只支持 1 或 2 声道，实际 {channels}")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype('<i2'), 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype('<f4'), 1.0
    else:
        raise UnsupportedEncoding(f"不支持的编码: format=0x{tag:04x}, {bits} bit")
    if block_align != channels * dtype.itemsize:
        raise MalformedContainer(f"block_align={block_align} 与声道/位深不一致")
    if rate <= 0:
        raise MalformedContainer("采样率为 0")

    n_frames = len(pcm) // block_align
    if n_frames == 0:
        raise EmptyAudio(f"没有音频样本: {path}")
    raw = np.frombuffer(pcm[:n_frames * block_align], dtype=dtype)
    x = raw.astype(np.float64).reshape(n_frames, channels) / scale
    mono = x.mean(axis=1) if channels > 1 else x[:, 0]
    if not np.all(np.isfinite(mono)):
        raise MalformedContainer(f"样本包含 NaN/Inf: {path}")
    mono = np.clip(mono, -1.0, 1.0)

    return AudioClip(samples=mono, sample_rate_hz=rate, utt_id=_stem(path))


def _stem(path) -> str:
    name = str(path).replace('\\', '/').rsplit('/', 1)[-1]
    return name.rsplit('.', 1)[0] if '.' in name else name


# ── WAV 写入 ─────────────────────────────────────────────────

def write_wav(path, clip: AudioClip, encoding: str = 'pcm16') -> None:
    """写出单声道 WAV。PCM16 量化为 round(x·32768) 并截断到 int16 范围。"""
    x = np.clip(clip.samples, -1.0, 1.0)
    if encoding == 'pcm16':
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype('<i2').tobytes()
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif encoding == 'float32':
        payload = x.astype('<f4').tobytes()
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"不支持的编码: {encoding}")

    block_align = bits // 8
    fmt_body = struct.pack('<HHIIHH', tag, 1, clip.sample_rate_hz,
                           clip.sample_rate_hz * block_align, block_align, bits)
    pad = b'\x00' if len(payload) & 1 else b''
    riff_size = 4 + (8 + len(fmt_body)) + (8 + len(payload) + len(pad))
    with open(path, 'wb') as f:
        f.write(b'RIFF' + struct.pack('<I', riff_size) + b'WAVE')
        f.write(b'fmt ' + struct.pack('<I', len(fmt_body)) + fmt_body)
        f.write(b'data' + struct.pack('<I', len(payload)) + payload + pad)


# ── 重采样 ───────────────────────────────────────────────────

def _kaiser_sinc(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    half_len = _ZERO_CROSSINGS * max_rate
    return signal.firwin(2 * half_len + 1, 1.0 / max_rate,
                         window=('kaiser', _KAISER_BETA))


def resample_samples(x: np.ndarray, up: int, down: int) -> np.ndarray:
    """按 up/down 有理比多相重采样，输出长度 ceil(len·up/down)"""
    g = gcd(up, down)
    up, down = up // g, down // g
    if up == down:
        return np.array(x, dtype=np.float64, copy=True)
    # padtype='mean'：边界按均值延拓，直流信号逐点保持
    return signal.resample_poly(np.asarray(x, dtype=np.float64), up, down,
                                window=_kaiser_sinc(up, down), padtype='mean')


def change_rate(x: np.ndarray, factor: float, max_denominator: int = 64) -> np.ndarray:
    """把信号“加速” factor 倍（长度约 len/factor），音高随之改变"""
    if factor <= 0:
        raise ValueError(f"速度因子必须为正: {factor}")
    ratio = Fraction(1.0 / factor).limit_denominator(max_denominator)
    return resample_samples(x, ratio.numerator, ratio.denominator)


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Kaiser(β=8) 窗 sinc 多相重采样；同采样率时原样返回"""
    if target_hz <= 0:
        raise ValueError(f"目标采样率必须为正: {target_hz}")
    if target_hz == clip.sample_rate_hz:
        return clip
    y = resample_samples(clip.samples, int(target_hz), clip.sample_rate_hz)
    return AudioClip(samples=np.clip(y, -1.0, 1.0), sample_rate_hz=target_hz,
                     utt_id=clip.utt_id)


def load_audio(path, target_hz: int = CANONICAL_RATE) -> AudioClip:
    """读取并规范化到 target_hz（默认 16 kHz 单声道）"""
    clip = read_wav(path)
    if clip.sample_rate_hz not in STANDARD_RATES or clip.sample_rate_hz != target_hz:
        clip = resample(clip, target_hz)
    return clip


# ── 分帧 ─────────────────────────────────────────────────────

def make_window(kind: str, length: int) -> np.ndarray:
    if kind == 'hamming':
        return signal.get_window('hamming', length, fftbins=True)
    if kind == 'hann':
        return signal.get_window('hann', length, fftbins=True)
    if kind == 'rectangular':
        return np.ones(length)
    raise ValueError(f"未知窗函数: {kind}（可选 {', '.join(WINDOW_KINDS)}）")


def preemphasis(x: np.ndarray, coeff: float) -> np.ndarray:
    """y[n] = x[n] − coeff·x[n−1]，y[0] = x[0]"""
    x = np.asarray(x, dtype=np.float64)
    if coeff == 0 or x.size == 0:
        return x.copy()
    return np.append(x[:1], x[1:] - coeff * x[:-1])


def frame_count(num_samples: int, frame_len: int, hop_len: int) -> int:
    if num_samples < frame_len:
        return 0
    return (num_samples - frame_len) // hop_len + 1


def ms_to_samples(ms: float, sample_rate_hz: int) -> int:
    return int(round(ms * sample_rate_hz / 1000.0))


def frame_and_window(clip: AudioClip, frame_ms: float = 25.0, hop_ms: float = 10.0,
                     window_kind: str = 'hamming', preemph: float = 0.97) -> FrameMatrix:
    """预加重 → 分帧 → 加窗

    Raises: ClipTooShort（样本数不足一帧，调用方自行补零或丢弃）
    """
    if not (0 < hop_ms <= frame_ms):
        raise ValueError(f"需要 0 < hop_ms ≤ frame_ms，实际 hop={hop_ms}, frame={frame_ms}")
    if not (0 <= preemph < 1):
        raise ValueError(f"预加重系数须在 [0, 1) 内: {preemph}")

    frame_len = ms_to_samples(frame_ms, clip.sample_rate_hz)
    hop_len = max(1, ms_to_samples(hop_ms, clip.sample_rate_hz))
    n = frame_count(clip.num_samples, frame_len, hop_len)
    if n == 0:
        raise ClipTooShort(
            f"{clip.utt_id or '片段'} 只有 {clip.num_samples} 个样本，不足一帧 ({frame_len})")

    y = preemphasis(clip.samples, preemph)
    idx = np.arange(frame_len)[None, :] + hop_len * np.arange(n)[:, None]
    win = make_window(window_kind, frame_len)
    return FrameMatrix(frames=y[idx] * win, hop_len=hop_len, window_kind=window_kind,
                       sample_rate_hz=clip.sample_rate_hz, window=win)
