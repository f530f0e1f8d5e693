# -*- coding: utf-8 -*-
"""SpoofKit 异常层级

所有可预期的数据/运行期错误都继承 SpoofKitError，CLI 据此返回退出码 1；
参数类错误同时继承 ValueError，便于调用方按内置类型捕获。
"""


class SpoofKitError(Exception):
    """SpoofKit 全部错误的根类"""


# ── 音频 ──────────────────────────────────────────────────────
class AudioError(SpoofKitError):
    pass


class MalformedContainer(AudioError, ValueError):
    """RIFF/WAVE 容器结构损坏（魔数或块长度不对）"""


class UnsupportedEncoding(AudioError, ValueError):
    """非 PCM16 / float32 编码（压缩格式等）"""


class EmptyAudio(AudioError, ValueError):
    """data 块中没有任何样本"""


class ClipTooShort(AudioError, ValueError):
    """样本数不足一帧"""


# ── 特征 ──────────────────────────────────────────────────────
class FeatureError(SpoofKitError):
    pass


class DegenerateBand(FeatureError, ValueError):
    """滤波器中心落到同一个 FFT bin 上"""


class WindowExceedsSignal(FeatureError, ValueError):
    """CQT 最长窗口超过片段长度"""


class CacheError(FeatureError):
    """特征缓存文件损坏或缺失"""


class HashMismatch(FeatureError):
    """模型与特征缓存的配置哈希不一致"""


# ── 模型 ──────────────────────────────────────────────────────
class ModelError(SpoofKitError):
    pass


class InsufficientData(ModelError, ValueError):
    pass


class SingularCovariance(ModelError):
    pass


class DimensionMismatch(ModelError, ValueError):
    pass


class EmptyFeatures(ModelError, ValueError):
    pass


class SingleClass(ModelError, ValueError):
    pass


class VersionMismatch(ModelError):
    pass


class CorruptModel(ModelError):
    pass


# ── 指标 ──────────────────────────────────────────────────────
class MetricsError(SpoofKitError):
    pass


class MissingClass(MetricsError, ValueError):
    """分数集合中缺少 bonafide 或 spoof"""


# ── 协议 ──────────────────────────────────────────────────────
class ProtocolError(SpoofKitError):
    pass


class ParseError(ProtocolError, ValueError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"第 {line} 行: {message}" if line else message)


class DuplicateUtterance(ProtocolError, ValueError):
    pass


class SpeakerOverlap(ProtocolError):
    def __init__(self, overlaps: dict):
        # {(domain, speaker_id): [split, ...]}
        self.overlaps = overlaps
        self.speakers = sorted({spk for _dom, spk in overlaps})
        detail = ", ".join(
            f"{dom}/{spk}: {'+'.join(splits)}"
            for (dom, spk), splits in sorted(overlaps.items()))
        super().__init__(f"说话人跨集合重叠: {detail}")


class InsufficientSpeakers(ProtocolError, ValueError):
    pass


# ── 合成 ──────────────────────────────────────────────────────
class SynthError(SpoofKitError):
    pass


class UnvoicedInput(SynthError, ValueError):
    """F0 估计失败（输入为静音或全部清音）"""


# ── 配置 ──────────────────────────────────────────────────────
class ConfigError(SpoofKitError, ValueError):
    """配置文件或命令行覆盖项非法（未知字段、非法枚举值），CLI 返回退出码 2"""
