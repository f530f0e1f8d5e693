# -*- coding: utf-8 -*-
"""哈希/校验引擎 — 纯函数，无 UI 依赖

- 配置哈希：规范化 JSON → BLAKE2b(8 字节) → 小端 u64，写入特征缓存与模型文件头
- CRC32：模型文件尾部校验
"""

import hashlib
import json
import zlib

U64_MASK = 0xFFFFFFFFFFFFFFFF


def canonical_json(obj) -> str:
    """键排序、无多余空白的 JSON，保证同一配置得到同一字节串"""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'),
                      ensure_ascii=True, allow_nan=False)


def config_hash(obj) -> int:
    """对可 JSON 序列化的配置对象计算 u64 哈希"""
    digest = hashlib.blake2b(canonical_json(obj).encode('utf-8'),
                             digest_size=8).digest()
    return int.from_bytes(digest, 'little') & U64_MASK


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def format_hash(value: int) -> str:
    return format(value & U64_MASK, '016x')
