# -*- coding: utf-8 -*-
"""模型文件读写

文件格式（小端）：
    magic "SPCM" | version u16 | kind u8 | feature config hash u64 | payload | CRC32(之前全部字节)

读取顺序：魔数 → 版本（VersionMismatch）→ CRC（CorruptModel）→ 解析负载。
"""

import io
import os
import struct
from pathlib import Path

import numpy as np

from core.errors import CorruptModel, VersionMismatch
from core.gbdt import PRESETS, GbdtModel, Tree
from core.gmm import GmmModel, GmmPairCm
from core.hashing import crc32

MAGIC = b'SPCM'
VERSION = 1
KIND_GMM_PAIR = 1
KIND_GBDT = 2

_HEADER = struct.Struct('<4sHBQ')
_TRAILER = struct.Struct('<I')


# ── 负载编码 ─────────────────────────────────────────────────

def _write_array(buf, arr, dtype):
    buf.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _encode_gmm(buf, model: GmmModel):
    _write_array(buf, model.weights, '<f8')
    _write_array(buf, model.means, '<f8')
    _write_array(buf, model.covariances, '<f8')


def _encode_gmm_pair(cm: GmmPairCm) -> bytes:
    buf = io.BytesIO()
    for model in (cm.bonafide, cm.spoof):
        buf.write(struct.pack('<II', model.num_components, model.dim))
        _encode_gmm(buf, model)
    return buf.getvalue()


def _encode_gbdt(model: GbdtModel) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack('<BIdddI', PRESETS.index(model.preset), model.dim,
                          model.learning_rate, model.base_score, model.lam, len(model.trees)))
    for tree in model.trees:
        buf.write(struct.pack('<I', tree.num_nodes))
        _write_array(buf, tree.feature, '<i4')
        _write_array(buf, tree.threshold, '<f8')
        _write_array(buf, tree.left, '<i4')
        _write_array(buf, tree.right, '<i4')
        _write_array(buf, tree.value, '<f8')
    return buf.getvalue()


def model_to_bytes(model) -> bytes:
    if isinstance(model, GmmPairCm):
        kind, payload = KIND_GMM_PAIR, _encode_gmm_pair(model)
    elif isinstance(model, GbdtModel):
        kind, payload = KIND_GBDT, _encode_gbdt(model)
    else:
        raise TypeError(f"不支持的模型类型: {type(model).__name__}")
    body = _HEADER.pack(MAGIC, VERSION, kind, model.feature_config_hash) + payload
    return body + _TRAILER.pack(crc32(body))


# ── 负载解码 ─────────────────────────────────────────────────

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CorruptModel("模型负载被截断")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def array(self, dtype: str, count: int, shape=None):
        dt = np.dtype(dtype)
        size = dt.itemsize * count
        if self.pos + size > len(self.data):
            raise CorruptModel("模型负载被截断")
        arr = np.frombuffer(self.data, dtype=dt, count=count, offset=self.pos).copy()
        self.pos += size
        return arr.reshape(shape) if shape is not None else arr


def _decode_gmm_pair(reader: _Reader, config_hash: int) -> GmmPairCm:
    models = []
    for _ in range(2):
        k, d = reader.unpack('<II')
        weights = reader.array('<f8', k)
        means = reader.array('<f8', k * d, (k, d))
        covs = reader.array('<f8', k * d * d, (k, d, d))
        models.append(GmmModel(weights, means, covs))
    return GmmPairCm(models[0], models[1], config_hash)


def _decode_gbdt(reader: _Reader, config_hash: int) -> GbdtModel:
    preset_idx, dim, lr, base, lam, num_trees = reader.unpack('<BIdddI')
    if preset_idx >= len(PRESETS):
        raise CorruptModel(f"未知生长方式编号 {preset_idx}")
    trees = []
    for _ in range(num_trees):
        (n,) = reader.unpack('<I')
        trees.append(Tree(
            feature=reader.array('<i4', n).astype(np.int64),
            threshold=reader.array('<f8', n),
            left=reader.array('<i4', n).astype(np.int64),
            right=reader.array('<i4', n).astype(np.int64),
            value=reader.array('<f8', n),
        ))
    return GbdtModel(trees=trees, learning_rate=lr, base_score=base,
                     preset=PRESETS[preset_idx], dim=dim,
                     feature_config_hash=config_hash, lam=lam)


def model_from_bytes(data: bytes):
    if len(data) < _HEADER.size + _TRAILER.size:
        raise CorruptModel("模型文件过短")
    magic, version, kind, config_hash = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptModel("不是 SPCM 模型文件")
    if version != VERSION:
        raise VersionMismatch(f"模型版本 {version} 不受支持（当前 {VERSION}）")
    body, (stored,) = data[:-_TRAILER.size], _TRAILER.unpack(data[-_TRAILER.size:])
    if crc32(body) != stored:
        raise CorruptModel("CRC32 校验失败，模型文件已损坏")

    reader = _Reader(body)
    reader.pos = _HEADER.size
    if kind == KIND_GMM_PAIR:
        model = _decode_gmm_pair(reader, config_hash)
    elif kind == KIND_GBDT:
        model = _decode_gbdt(reader, config_hash)
    else:
        raise CorruptModel(f"未知模型类型编号 {kind}")
    if reader.pos != len(body):
        raise CorruptModel("模型负载之后有多余字节")
    return model


# ── 文件接口 ─────────────────────────────────────────────────

def save_model(model, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as f:
        f.write(model_to_bytes(model))
    os.replace(tmp, path)
    return path


def load_model(path):
    with open(path, 'rb') as f:
        return model_from_bytes(f.read())
