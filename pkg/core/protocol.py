# -*- coding: utf-8 -*-
"""数据集协议 — 清单 TSV、说话人不相交的 70-10-20 划分、统计与校验

清单为 UTF-8 TSV，首行为表头，8 列依次为：
    utt_id  path  speaker_id  sex  domain  label  attack_id  split
bonafide 的 attack_id 必须为 "-"；split 为 "-" 表示尚未划分。
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from core.errors import (DuplicateUtterance, InsufficientSpeakers, ParseError,
                         SpeakerOverlap)

logger = logging.getLogger(__name__)

COLUMNS = ('utt_id', 'path', 'speaker_id', 'sex', 'domain', 'label', 'attack_id', 'split')
HEADER = '\t'.join(COLUMNS)
SEXES = ('male', 'female', 'unknown')
DOMAINS = ('native', 'nonnative')
LABELS = ('bonafide', 'spoof')
SPLITS = ('train', 'dev', 'eval')
UNASSIGNED = '-'
NO_ATTACK = '-'
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
TARGET_SPOOF_RATIO = 6.0
RATIO_TOLERANCE = 0.10


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    path: str
    speaker_id: str
    sex: str
    domain: str
    label: str
    attack_id: str
    split: str = UNASSIGNED

    def validate(self) -> None:
        for name, allowed in (('sex', SEXES), ('domain', DOMAINS), ('label', LABELS)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name}={getattr(self, name)!r} 不在 {'/'.join(allowed)} 中")
        if self.split not in SPLITS and self.split != UNASSIGNED:
            raise ValueError(f"split={self.split!r} 不在 {'/'.join(SPLITS)} 中")
        if (self.label == 'bonafide') != (self.attack_id == NO_ATTACK):
            raise ValueError(f"label={self.label} 与 attack_id={self.attack_id!r} 不一致"
                             "（bonafide ⇔ attack_id 为 \"-\"）")
        if not self.utt_id or not self.speaker_id or not self.path:
            raise ValueError("utt_id / path / speaker_id 不能为空")

    def to_row(self) -> str:
        return '\t'.join(getattr(self, c) for c in COLUMNS)


# ── 读写 ─────────────────────────────────────────────────────

def parse_manifest(text: str) -> list:
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if not lines or lines[0].rstrip('\r') != HEADER:
        raise ParseError(f"缺少表头或表头不正确，需要: {HEADER!r}", 1)

    entries = []
    seen = {}
    for lineno, line in enumerate(lines[1:], 2):
        line = line.rstrip('\r')
        if not line:
            continue
        cols = line.split('\t')
        if len(cols) != len(COLUMNS):
            raise ParseError(f"需要 {len(COLUMNS)} 列，实际 {len(cols)} 列", lineno)
        entry = ManifestEntry(*cols)
        try:
            entry.validate()
        except ValueError as exc:
            raise ParseError(str(exc), lineno)
        if entry.utt_id in seen:
            raise DuplicateUtterance(
                f"第 {lineno} 行: utt_id {entry.utt_id} 与第 {seen[entry.utt_id]} 行重复")
        seen[entry.utt_id] = lineno
        entries.append(entry)
    return entries


def load_manifest(path) -> list:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return parse_manifest(f.read())


def dumps_manifest(entries) -> str:
    return HEADER + '\n' + ''.join(e.to_row() + '\n' for e in entries)


def save_manifest(path, entries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dumps_manifest(entries))
    return path


def resolve_audio_path(manifest_path, entry: ManifestEntry) -> Path:
    """path 列相对于清单所在目录"""
    return Path(manifest_path).parent / entry.path


def select(entries, domains=None, splits=None, labels=None) -> list:
    return [e for e in entries
            if (domains is None or e.domain in domains)
            and (splits is None or e.split in splits)
            and (labels is None or e.label in labels)]


# ── 统计与校验 ───────────────────────────────────────────────

@dataclass
class SplitStats:
    bonafide: int = 0
    spoof: int = 0
    bonafide_speakers: dict = field(default_factory=dict)   # sex → 人数
    spoof_speakers: dict = field(default_factory=dict)
    attacks: tuple = ()

    @property
    def ratio(self) -> float:
        return self.spoof / self.bonafide if self.bonafide else float('inf')


@dataclass
class ProtocolStats:
    cells: dict                 # (domain, split) → SplitStats
    warnings: list = field(default_factory=list)

    def __getitem__(self, key) -> SplitStats:
        return self.cells[key]


def _count_speakers(entries) -> dict:
    by_sex = {}
    for spk, sex in sorted({(e.speaker_id, e.sex) for e in entries}):
        by_sex[sex] = by_sex.get(sex, 0) + 1
    return by_sex


def compute_stats(entries) -> ProtocolStats:
    groups = {}
    for e in entries:
        groups.setdefault((e.domain, e.split), []).append(e)
    cells = {}
    for key in sorted(groups, key=lambda k: (DOMAINS.index(k[0]), _split_rank(k[1]))):
        rows = groups[key]
        bona = [e for e in rows if e.label == 'bonafide']
        spoof = [e for e in rows if e.label == 'spoof']
        cells[key] = SplitStats(
            bonafide=len(bona), spoof=len(spoof),
            bonafide_speakers=_count_speakers(bona),
            spoof_speakers=_count_speakers(spoof),
            attacks=tuple(sorted({e.attack_id for e in spoof})),
        )
    return ProtocolStats(cells)


def _split_rank(split: str) -> int:
    return SPLITS.index(split) if split in SPLITS else len(SPLITS)


def find_speaker_overlaps(entries) -> dict:
    splits_of = {}
    for e in entries:
        splits_of.setdefault((e.domain, e.speaker_id), set()).add(e.split)
    return {key: sorted(splits, key=_split_rank)
            for key, splits in splits_of.items() if len(splits) > 1}


def validate_protocol(entries) -> ProtocolStats:
    """统计并校验协议

    说话人在同一域内跨集合 → SpeakerOverlap；
    spoof:bonafide 偏离 6:1 超过 10% → 仅警告（写入 stats.warnings）。
    """
    entries = list(entries)
    if not entries:
        raise ValueError("清单为空")
    unassigned = [e.utt_id for e in entries if e.split == UNASSIGNED]
    if unassigned:
        raise ValueError(f"{len(unassigned)} 条语音尚未划分集合（例如 {unassigned[0]}）")
    overlaps = find_speaker_overlaps(entries)
    if overlaps:
        raise SpeakerOverlap(overlaps)

    stats = compute_stats(entries)
    for (domain, split), cell in stats.cells.items():
        if cell.bonafide == 0 or cell.spoof == 0:
            msg = f"{domain}/{split}: bonafide {cell.bonafide}、spoof {cell.spoof}，缺少一个类别"
        elif abs(cell.ratio - TARGET_SPOOF_RATIO) / TARGET_SPOOF_RATIO > RATIO_TOLERANCE:
            msg = f"{domain}/{split}: spoof:bonafide = {cell.ratio:.2f}，偏离 6:1 超过 10%"
        else:
            continue
        logger.warning(msg)
        stats.warnings.append(msg)
    return stats


def protocol_stats_table(stats: ProtocolStats) -> str:
    """按表 1 的形状输出统计表（说话人数为 bonafide / spoof）"""
    header = ('Type', 'Set', 'Male', 'Female', 'Bonafide', 'Spoof', 'Attacks')
    rows = []
    for (domain, split), cell in stats.cells.items():
        def spk(sex):
            b = cell.bonafide_speakers.get(sex, 0)
            s = cell.spoof_speakers.get(sex, 0)
            return str(b) if b == s else f"{b} / {s}"
        rows.append((domain, split, spk('male'), spk('female'),
                     f"{cell.bonafide:,}", f"{cell.spoof:,}", str(len(cell.attacks))))
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ['  '.join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append('  '.join('-' * w for w in widths))
    for r in rows:
        lines.append('  '.join(c.ljust(w) for c, w in zip(r, widths)))
    return '\n'.join(lines)


# ── 划分 ─────────────────────────────────────────────────────

def make_splits(entries, ratios=DEFAULT_RATIOS, seed: int = 42) -> list:
    """说话人级贪心划分

    每个域内说话人按种子洗牌，依次放入“目标语音数 − 已分配语音数”最大的集合
    （相同时按 train、dev、eval 的顺序）；同一说话人的全部语音（含其 spoof）同进同出。
    """
    entries = list(entries)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not np.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios 必须是三个和为 1 的非负数: {ratios}")
    rng = np.random.default_rng(seed)
    assignment = {}

    for domain in sorted({e.domain for e in entries}, key=DOMAINS.index):
        counts = {}
        for e in entries:
            if e.domain == domain:
                counts[e.speaker_id] = counts.get(e.speaker_id, 0) + 1
        speakers = sorted(counts)
        if len(speakers) < 3:
            raise InsufficientSpeakers(f"{domain} 域只有 {len(speakers)} 个说话人（至少 3 个）")
        order = rng.permutation(len(speakers))
        total = sum(counts.values())
        targets = np.asarray(ratios, dtype=np.float64) * total
        assigned = np.zeros(3)
        for i in order:
            spk = speakers[i]
            k = int(np.argmax(targets - assigned))
            assigned[k] += counts[spk]
            assignment[(domain, spk)] = SPLITS[k]
        logger.info("%s: 划分语音数 train %d / dev %d / eval %d", domain, *assigned.astype(int))

    return [replace(e, split=assignment[(e.domain, e.speaker_id)]) for e in entries]
