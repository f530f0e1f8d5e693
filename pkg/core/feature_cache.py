# -*- coding: utf-8 -*-
"""特征缓存 — 每条语音一个二进制记录

记录格式（小端）：
    magic "FEAT" | version u16 | dim u32 | frames u32 | config hash u64 | float32 行主序数值
"""

import csv
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from core.errors import CacheError, HashMismatch
from core.features import FeatureConfig, FeatureMatrix

MAGIC = b'FEAT'
VERSION = 1
SUFFIX = '.feat'
_HEADER = struct.Struct('<4sHIIQ')


@dataclass(frozen=True)
class FeatureHeader:
    version: int
    dim: int
    num_frames: int
    config_hash: int


def record_path(cache_dir, utt_id: str) -> Path:
    return Path(cache_dir) / f"{utt_id}{SUFFIX}"


def write_feature_record(path, feats: FeatureMatrix, config_hash: int = None) -> None:
    """写入单条特征记录（先写临时文件再替换，并行提取时不会留下半截文件）"""
    if config_hash is None:
        config_hash = feats.config.hash
    values = np.ascontiguousarray(feats.values, dtype='<f4')
    header = _HEADER.pack(MAGIC, VERSION, feats.dim, feats.num_frames, config_hash)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as f:
        f.write(header)
        f.write(values.tobytes())
    os.replace(tmp, path)


def _parse_header(raw: bytes, path) -> FeatureHeader:
    if len(raw) < _HEADER.size:
        raise CacheError(f"缓存记录过短: {path}")
    magic, version, dim, frames, chash = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CacheError(f"缓存魔数错误: {path}")
    if version != VERSION:
        raise CacheError(f"缓存版本 {version} 不受支持（当前 {VERSION}）: {path}")
    return FeatureHeader(version, dim, frames, chash)


def read_feature_header(path) -> FeatureHeader:
    try:
        with open(path, 'rb') as f:
            raw = f.read(_HEADER.size)
    except FileNotFoundError:
        raise CacheError(f"缓存记录不存在: {path}")
    return _parse_header(raw, path)


def read_feature_record(path, cfg: FeatureConfig, utt_id: str = None) -> FeatureMatrix:
    """读取特征记录；配置哈希与 cfg 不一致时抛 HashMismatch"""
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except FileNotFoundError:
        raise CacheError(f"缓存记录不存在: {path}")
    header = _parse_header(raw, path)
    if header.config_hash != cfg.hash:
        raise HashMismatch(
            f"{path}: 缓存配置哈希 {header.config_hash:016x} ≠ 当前配置 {cfg.hash:016x}")
    if header.dim != cfg.dim:
        raise CacheError(f"{path}: 维度 {header.dim} 与配置 {cfg.dim} 不符")
    expected = _HEADER.size + 4 * header.dim * header.num_frames
    if len(raw) != expected:
        raise CacheError(f"{path}: 记录长度 {len(raw)} ≠ 预期 {expected}")
    values = np.frombuffer(raw, dtype='<f4', offset=_HEADER.size)
    values = values.reshape(header.num_frames, header.dim).astype(np.float64)
    if utt_id is None:
        utt_id = Path(path).name[:-len(SUFFIX)] if str(path).endswith(SUFFIX) else Path(path).stem
    return FeatureMatrix(values, cfg, utt_id)


def is_up_to_date(path, cfg: FeatureConfig) -> bool:
    """记录存在、格式正确且配置哈希一致"""
    try:
        header = read_feature_header(path)
    except CacheError:
        return False
    if header.config_hash != cfg.hash or header.dim != cfg.dim:
        return False
    return Path(path).stat().st_size == _HEADER.size + 4 * header.dim * header.num_frames


def export_csv(path, feats: FeatureMatrix) -> None:
    """调试导出：每帧一行"""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow([f"c{i}" for i in range(feats.dim)])
        for row in feats.values:
            writer.writerow([repr(float(v)) for v in row])
