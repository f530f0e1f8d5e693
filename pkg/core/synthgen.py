# -*- coding: utf-8 -*-
"""合成语料生成 — 伪说话人、源-滤波器“真实语音”、声码器式伪造

- bonafide：带 ±2% 抖动的脉冲串 → 声门低通 → 级联共振峰谐振器 → −30 dB 噪声底
- lpc_resynth：逐帧 16 阶 LPC，激励替换为估计 F0 的无抖动脉冲串，Hann 重叠相加
- f0_shift：按半音比重采样后用相位声码器拉回原长（音高与共振峰一起移动）
- speed_shift：直接重采样，不做音高校正
- 非母语域：共振峰整体偏移 + 不同的 F0 范围
- 每条语音的随机流由 utt_id 派生，并行顺序不影响输出
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg, signal
from tqdm import tqdm

from core.audio_io import CANONICAL_RATE, AudioClip, change_rate, write_wav
from core.errors import UnvoicedInput
from core.hashing import config_hash
from core.protocol import (DOMAINS, NO_ATTACK, UNASSIGNED, ManifestEntry, make_splits,
                           save_manifest, validate_protocol)

logger = logging.getLogger(__name__)

RECIPE_KINDS = ('lpc_resynth', 'f0_shift', 'speed_shift')
SPEED_RANGE = (0.8, 1.25)
SEMITONE_RANGE = (-4.0, 4.0)
LPC_ORDER = 16
F0_SEARCH_HZ = (60.0, 400.0)
VOICING_THRESHOLD = 0.3
NOISE_FLOOR_DB = -30.0
JITTER = 0.02
NONNATIVE_FORMANT_SHIFT_HZ = 250.0
MANIFEST_NAME = 'manifest.tsv'
WAV_DIR = 'wav'

# 每个域的 F0 范围（Hz），按性别
_F0_RANGES = {
    ('native', 'male'): (95.0, 135.0),
    ('native', 'female'): (175.0, 235.0),
    ('nonnative', 'male'): (115.0, 160.0),
    ('nonnative', 'female'): (200.0, 270.0),
}
# 参考共振峰（Hz）与带宽（Hz）
_BASE_FORMANTS = ((520.0, 80.0), (1480.0, 110.0), (2500.0, 150.0), (3450.0, 200.0))


# ── 类型 ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class PseudoSpeaker:
    speaker_id: str
    f0_hz: float
    formant_set: tuple          # ((频率, 带宽), ...)，3–5 组
    domain_shift: float = 0.0
    sex: str = 'unknown'
    domain: str = 'native'

    def __post_init__(self):
        if not 80.0 <= self.f0_hz <= 300.0:
            raise ValueError(f"{self.speaker_id}: f0={self.f0_hz} 不在 80–300 Hz 内")
        if not 3 <= len(self.formant_set) <= 5:
            raise ValueError(f"{self.speaker_id}: 需要 3–5 组共振峰")
        for freq, bw in self.effective_formants():
            if not 0 < freq < CANONICAL_RATE / 2 or bw <= 0:
                raise ValueError(f"{self.speaker_id}: 共振峰 ({freq}, {bw}) 不合法")

    def effective_formants(self) -> tuple:
        return tuple((f + self.domain_shift, bw) for f, bw in self.formant_set)


@dataclass(frozen=True)
class SpoofRecipe:
    kind: str
    attack_id: str
    params: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in RECIPE_KINDS:
            raise ValueError(f"未知伪造配方类型: {self.kind}（可选 {', '.join(RECIPE_KINDS)}）")
        if not self.attack_id or self.attack_id == NO_ATTACK:
            raise ValueError("attack_id 不能为空或 \"-\"")
        if self.kind == 'speed_shift':
            lo, hi = self._extent('factor', 1.0)
            if lo < SPEED_RANGE[0] - 1e-12 or hi > SPEED_RANGE[1] + 1e-12:
                raise ValueError(f"{self.attack_id}: 速度因子须在 {SPEED_RANGE} 内")
        else:
            key = 'semitones' if self.kind == 'f0_shift' else 'f0_semitones'
            lo, hi = self._extent(key, 0.0)
            if lo < SEMITONE_RANGE[0] or hi > SEMITONE_RANGE[1]:
                raise ValueError(f"{self.attack_id}: 半音偏移须在 {SEMITONE_RANGE} 内")

    def _extent(self, key, default):
        center = float(self.params.get(key, default))
        spread = float(self.params.get('spread', 0.0))
        if spread < 0:
            raise ValueError(f"{self.attack_id}: spread 不能为负")
        return center - spread, center + spread

    def draw(self, key: str, default: float, rng: np.random.Generator) -> float:
        """参数值；带 spread 时在 ±spread 内按语音随机流抽取"""
        center = float(self.params.get(key, default))
        spread = float(self.params.get('spread', 0.0))
        return center + rng.uniform(-spread, spread) if spread > 0 else center

    def to_dict(self) -> dict:
        return {'kind': self.kind, 'attack_id': self.attack_id, 'params': dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> 'SpoofRecipe':
        unknown = set(data) - {'kind', 'attack_id', 'params'}
        if unknown:
            raise ValueError(f"配方未知字段: {', '.join(sorted(unknown))}")
        return cls(kind=data['kind'], attack_id=data['attack_id'],
                   params=dict(data.get('params', {})))


DEFAULT_RECIPES = (
    SpoofRecipe('lpc_resynth', 'A01', {'order': LPC_ORDER}),
    SpoofRecipe('f0_shift', 'A02', {'semitones': 2.0, 'spread': 1.0}),
    SpoofRecipe('f0_shift', 'A03', {'semitones': -2.0, 'spread': 1.0}),
    SpoofRecipe('speed_shift', 'A04', {'factor': 1.12, 'spread': 0.05}),
    SpoofRecipe('speed_shift', 'A05', {'factor': 0.9, 'spread': 0.05}),
    SpoofRecipe('lpc_resynth', 'A06', {'order': LPC_ORDER, 'f0_semitones': 1.5, 'spread': 0.5}),
)


def derive_seed(seed: int, *keys) -> int:
    """由主种子和任意键派生独立的随机流种子"""
    return config_hash([int(seed)] + [str(k) for k in keys])


# ── 说话人 ───────────────────────────────────────────────────

def make_speakers(domain: str, n: int, seed: int = 42) -> list:
    """生成 n 个伪说话人，性别交替；非母语域共振峰整体上移"""
    if domain not in DOMAINS:
        raise ValueError(f"未知域: {domain}")
    rng = np.random.default_rng(derive_seed(seed, 'speakers', domain))
    shift = NONNATIVE_FORMANT_SHIFT_HZ if domain == 'nonnative' else 0.0
    prefix = 'NAT' if domain == 'native' else 'NNS'
    speakers = []
    for i in range(n):
        sex = 'male' if i % 2 == 0 else 'female'
        lo, hi = _F0_RANGES[(domain, sex)]
        scale = 1.0 if sex == 'male' else 1.12
        formants = tuple(
            (round(f * scale * (1.0 + rng.uniform(-0.06, 0.06)), 1),
             round(bw * (1.0 + rng.uniform(-0.2, 0.2)), 1))
            for f, bw in _BASE_FORMANTS)
        speakers.append(PseudoSpeaker(
            speaker_id=f"{prefix}{i + 1:02d}",
            f0_hz=round(float(rng.uniform(lo, hi)), 2),
            formant_set=formants, domain_shift=shift, sex=sex, domain=domain))
    return speakers


# ── bonafide 合成 ────────────────────────────────────────────

def _resonator(freq: float, bw: float, fs: int):
    r = np.exp(-np.pi * bw / fs)
    a = np.array([1.0, -2.0 * r * np.cos(2.0 * np.pi * freq / fs), r * r])
    return np.array([a.sum()]), a     # 直流增益为 1


def _pulse_train(n: int, f0_track: np.ndarray, fs: int, rng=None, jitter: float = 0.0):
    """按逐样本 F0 轨迹放置单位能量脉冲；rng 给定时每个周期加 ±jitter 抖动"""
    out = np.zeros(n)
    pos = 0.0
    while pos < n:
        i = int(pos)
        period = fs / f0_track[i]
        out[i] = np.sqrt(period)
        if rng is not None and jitter > 0:
            period *= 1.0 + rng.uniform(-jitter, jitter)
        pos += period
    return out


def synth_bonafide(speaker: PseudoSpeaker, duration_s: float, seed: int,
                   sample_rate_hz: int = CANONICAL_RATE, formant_jitter: float = 0.05,
                   segment_s: float = 0.12) -> AudioClip:
    """源-滤波器合成；同一 (speaker, seed) 输出逐位相同"""
    if not 0.5 <= duration_s <= 20.0:
        raise ValueError(f"duration_s={duration_s} 不在 [0.5, 20] 内")
    fs = sample_rate_hz
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs

    # 语调：缓慢起伏 + 句末下倾
    contour = (1.0 + 0.06 * np.sin(2.0 * np.pi * rng.uniform(1.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
               - 0.05 * t / duration_s)
    excitation = _pulse_train(n, speaker.f0_hz * contour, fs, rng, JITTER)
    excitation = signal.lfilter([1.0], [1.0, -0.9], excitation)

    # 分段改变共振峰（元音变化），谐振器状态跨段延续
    seg_len = max(1, int(round(segment_s * fs)))
    formants = speaker.effective_formants()
    states = [np.zeros(2) for _ in formants]
    voiced = np.empty(n)
    for start in range(0, n, seg_len):
        chunk = excitation[start:start + seg_len]
        for j, (freq, bw) in enumerate(formants):
            f = freq * (1.0 + rng.uniform(-formant_jitter, formant_jitter)) if formant_jitter else freq
            b, a = _resonator(min(f, 0.45 * fs), bw, fs)
            chunk, states[j] = signal.lfilter(b, a, chunk, zi=states[j])
        voiced[start:start + seg_len] = chunk

    # 音节包络
    syllable = 0.55 + 0.45 * np.sin(np.pi * rng.uniform(3.0, 5.0) * t + rng.uniform(0, np.pi)) ** 2
    voiced *= syllable
    rms = np.sqrt(np.mean(voiced ** 2))
    noise = rng.standard_normal(n) * rms * 10.0 ** (NOISE_FLOOR_DB / 20.0)
    y = voiced + noise
    y *= 0.5 / np.max(np.abs(y))
    return AudioClip(samples=y, sample_rate_hz=fs, utt_id="")


# ── LPC 分析/再合成 ──────────────────────────────────────────

def lpc_coefficients(frame: np.ndarray, order: int = LPC_ORDER):
    """自相关法 LPC，返回 (A(z) 系数 [1, −a1, …], 残差增益)；静音帧返回 None"""
    r = np.correlate(frame, frame, mode='full')[frame.size - 1:frame.size + order]
    if r[0] <= 1e-12:
        return None
    r = r.copy()
    r[0] *= 1.0 + 1e-9       # 白噪声校正，保证 Toeplitz 系统可解
    coeffs = linalg.solve_toeplitz(r[:order], r[1:order + 1])
    a = np.concatenate([[1.0], -coeffs])
    residual = signal.lfilter(a, [1.0], frame)
    return a, float(np.sqrt(np.mean(residual ** 2)))


def estimate_f0(frame: np.ndarray, fs: int, f0_range=F0_SEARCH_HZ):
    """归一化自相关找基频；清音/静音返回 None"""
    frame = frame - frame.mean()
    energy = float(np.dot(frame, frame))
    if energy <= 1e-12:
        return None
    lag_min = int(np.floor(fs / f0_range[1]))
    lag_max = min(int(np.ceil(fs / f0_range[0])), frame.size - 1)
    if lag_max <= lag_min:
        return None
    ac = np.correlate(frame, frame, mode='full')[frame.size - 1:]
    lag = lag_min + int(np.argmax(ac[lag_min:lag_max + 1]))
    if ac[lag] / energy < VOICING_THRESHOLD:
        return None
    return fs / lag


def lpc_resynth(clip: AudioClip, rng: np.random.Generator, order: int = LPC_ORDER,
                f0_semitones: float = 0.0, frame_ms: float = 25.0) -> AudioClip:
    """LPC 声码器：保留逐帧包络，激励换成估计 F0 上的规则脉冲（清音帧用噪声）"""
    fs = clip.sample_rate_hz
    x = clip.samples
    n = x.size
    frame_len = int(round(frame_ms * fs / 1000.0))
    hop = frame_len // 2
    win = signal.get_window('hann', frame_len, fftbins=True)
    n_frames = max(1, -(-max(n - frame_len, 0) // hop) + 1)
    padded = np.concatenate([x, np.zeros(n_frames * hop + frame_len - n)])

    analyses = []
    f0s = np.zeros(n_frames)
    for m in range(n_frames):
        seg = padded[m * hop:m * hop + frame_len]
        analyses.append(lpc_coefficients(seg * win, order))
        f0 = estimate_f0(seg, fs)
        f0s[m] = f0 if f0 is not None else 0.0
    if not np.any(f0s > 0):
        raise UnvoicedInput(f"{clip.utt_id or '片段'}: 没有任何浊音帧，无法估计 F0")

    # 清音帧沿用最近的浊音 F0 仅用于脉冲相位推进
    voiced = f0s > 0
    idx = np.where(voiced, np.arange(n_frames), 0)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(voiced))
    filled = np.where(np.arange(n_frames) < first, f0s[first], f0s[idx])
    scale = 2.0 ** (f0_semitones / 12.0)
    track = np.repeat(filled * scale, hop)
    track = np.concatenate([track, np.full(padded.size - track.size, track[-1])])[:padded.size]
    pulses = _pulse_train(padded.size, np.clip(track, *F0_SEARCH_HZ), fs)
    noise = rng.standard_normal(padded.size)

    out = np.zeros(padded.size)
    for m, analysis in enumerate(analyses):
        if analysis is None:
            continue
        a, gain = analysis
        span = slice(m * hop, m * hop + frame_len)
        exc = pulses[span] if voiced[m] else noise[span]
        exc_rms = np.sqrt(np.mean(exc ** 2))
        if exc_rms <= 0:
            exc = noise[span]
            exc_rms = np.sqrt(np.mean(exc ** 2))
        out[span] += win * gain / exc_rms * signal.lfilter([1.0], a, exc)
    return AudioClip(samples=np.clip(out[:n], -1.0, 1.0), sample_rate_hz=fs, utt_id=clip.utt_id)


# ── 变速/变调 ────────────────────────────────────────────────

def time_stretch(x: np.ndarray, out_len: int, n_fft: int = 512, hop: int = 128) -> np.ndarray:
    """相位声码器把 x 拉伸/压缩到 out_len 个样本，平稳正弦分量的频率不变

    分析帧按 len(x)/out_len 的步长在 STFT 列之间插值幅度，相位按每个 bin 的瞬时频率累加。
    """
    x = np.asarray(x, dtype=np.float64)
    win = signal.get_window('hann', n_fft, fftbins=True)
    half = n_fft // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + hop)])
    starts = np.arange(0, padded.size - n_fft + 1, hop)
    spec = np.fft.rfft(sliding_window_view(padded, n_fft)[starts] * win, axis=1).T
    spec = np.concatenate([spec, np.zeros((spec.shape[0], 1))], axis=1)

    n_out = -(-out_len // hop) + 1
    steps = np.arange(n_out) * (x.size / out_len)
    steps = np.minimum(steps, spec.shape[1] - 2)
    idx = steps.astype(int)
    frac = steps - idx
    left, right = spec[:, idx], spec[:, idx + 1]
    mag = (1.0 - frac) * np.abs(left) + frac * np.abs(right)

    advance = 2.0 * np.pi * hop * np.arange(spec.shape[0]) / n_fft
    dphase = np.angle(right) - np.angle(left) - advance[:, None]
    dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
    phase = np.angle(spec[:, :1]) + np.concatenate(
        [np.zeros((spec.shape[0], 1)), np.cumsum(advance[:, None] + dphase, axis=1)[:, :-1]], axis=1)

    frames = np.fft.irfft(mag * np.exp(1j * phase), n=n_fft, axis=0).T * win
    out = np.zeros(n_out * hop + n_fft)
    norm = np.zeros_like(out)
    for m, frame in enumerate(frames):
        out[m * hop:m * hop + n_fft] += frame
        norm[m * hop:m * hop + n_fft] += win ** 2
    out = np.where(norm > 1e-3, out / np.maximum(norm, 1e-3), 0.0)
    return out[half:half + out_len]


def f0_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """重采样改变音高，再用相位声码器拉回原长"""
    ratio = 2.0 ** (semitones / 12.0)
    shifted = change_rate(clip.samples, ratio)
    y = time_stretch(shifted, clip.num_samples)
    return AudioClip(samples=np.clip(y, -1.0, 1.0), sample_rate_hz=clip.sample_rate_hz,
                     utt_id=clip.utt_id)


def speed_shift(clip: AudioClip, factor: float) -> AudioClip:
    """按 factor 加速（时长变为 1/factor），音高随之改变"""
    if not SPEED_RANGE[0] - 1e-12 <= factor <= SPEED_RANGE[1] + 1e-12:
        raise ValueError(f"速度因子 {factor} 不在 {SPEED_RANGE} 内")
    y = change_rate(clip.samples, factor)
    return AudioClip(samples=np.clip(y, -1.0, 1.0), sample_rate_hz=clip.sample_rate_hz,
                     utt_id=clip.utt_id)


def apply_spoof(clip: AudioClip, recipe: SpoofRecipe, seed: int) -> AudioClip:
    """按配方生成伪造语音，输出峰值与输入相同"""
    rng = np.random.default_rng(seed)
    if recipe.kind == 'lpc_resynth':
        semis = float(np.clip(recipe.draw('f0_semitones', 0.0, rng), *SEMITONE_RANGE))
        out = lpc_resynth(clip, rng, int(recipe.params.get('order', LPC_ORDER)), semis)
    elif recipe.kind == 'f0_shift':
        semis = float(np.clip(recipe.draw('semitones', 0.0, rng), *SEMITONE_RANGE))
        out = f0_shift(clip, semis)
    else:
        factor = float(np.clip(recipe.draw('factor', 1.0, rng), *SPEED_RANGE))
        out = speed_shift(clip, factor)

    peak_in = np.max(np.abs(clip.samples))
    peak_out = np.max(np.abs(out.samples))
    if peak_out > 0 and peak_in > 0:
        out = AudioClip(samples=out.samples * (peak_in / peak_out),
                        sample_rate_hz=out.sample_rate_hz, utt_id=clip.utt_id)
    return out


# ── 语料 ─────────────────────────────────────────────────────

def _render_utterance(job):
    speaker, utt_id, recipes, seed, duration_range, wav_dir = job
    rng = np.random.default_rng(derive_seed(seed, utt_id, 'duration'))
    duration = float(rng.uniform(*duration_range))
    bona = synth_bonafide(speaker, duration, derive_seed(seed, utt_id))
    bona.utt_id = utt_id
    write_wav(wav_dir / f"{utt_id}.wav", bona)
    rows = [ManifestEntry(utt_id, f"{WAV_DIR}/{utt_id}.wav", speaker.speaker_id, speaker.sex,
                          speaker.domain, 'bonafide', NO_ATTACK, UNASSIGNED)]
    for recipe in recipes:
        spoof_id = f"{utt_id}_{recipe.attack_id}"
        spoof = apply_spoof(bona, recipe, derive_seed(seed, spoof_id))
        write_wav(wav_dir / f"{spoof_id}.wav", spoof)
        rows.append(ManifestEntry(spoof_id, f"{WAV_DIR}/{spoof_id}.wav", speaker.speaker_id,
                                  speaker.sex, speaker.domain, 'spoof', recipe.attack_id,
                                  UNASSIGNED))
    return rows


def build_corpus(num_speakers_per_domain: int, utts_per_speaker: int, recipes, seed: int,
                 out_dir, duration_range=(1.0, 2.0), domains=DOMAINS, jobs: int = 1,
                 progress: bool = False) -> list:
    """生成 WAV 与清单（out_dir/manifest.tsv），返回已划分的清单条目"""
    recipes = list(recipes)
    if not recipes:
        raise ValueError("至少需要一个伪造配方")
    if len({r.attack_id for r in recipes}) != len(recipes):
        raise ValueError("配方的 attack_id 不能重复")
    lo, hi = duration_range
    if not 0.5 <= lo <= hi <= 20.0:
        raise ValueError(f"时长范围 {duration_range} 不合法")
    out_dir = Path(out_dir)
    wav_dir = out_dir / WAV_DIR
    wav_dir.mkdir(parents=True, exist_ok=True)

    jobs_list = []
    for domain in domains:
        for speaker in make_speakers(domain, num_speakers_per_domain, seed):
            for u in range(utts_per_speaker):
                utt_id = f"{speaker.speaker_id}_{u + 1:03d}"
                jobs_list.append((speaker, utt_id, recipes, seed, (lo, hi), wav_dir))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(tqdm(pool.map(_render_utterance, jobs_list), total=len(jobs_list),
                            desc='synth', unit='utt', disable=not progress))
    entries = [row for rows in results for row in rows]

    entries = make_splits(entries, seed=seed)
    validate_protocol(entries)
    save_manifest(out_dir / MANIFEST_NAME, entries)
    logger.info("语料生成完成：%d 条 bonafide，%d 条 spoof → %s",
                sum(e.label == 'bonafide' for e in entries),
                sum(e.label == 'spoof' for e in entries), out_dir / MANIFEST_NAME)
    return entries
