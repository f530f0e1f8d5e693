# -*- coding: utf-8 -*-
"""分数文件读写

每行 `utt_id<TAB>score<TAB>label`，UTF-8，LF 换行；以 # 开头的行忽略。
得分用 repr() 输出，读回后逐位相同。
"""

import math
from pathlib import Path

from core.errors import ParseError
from core.metrics import LABELS, ScoreEntry, ScoreSet


def format_score_line(entry: ScoreEntry) -> str:
    return f"{entry.utt_id}\t{float(entry.score)!r}\t{entry.label}\n"


def dumps_scores(scores: ScoreSet) -> str:
    return ''.join(format_score_line(e) for e in scores.entries)


def write_scores(path, scores: ScoreSet) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dumps_scores(scores))
    return path


def parse_scores(text: str) -> ScoreSet:
    entries = []
    seen = set()
    for lineno, line in enumerate(text.split('\n'), 1):
        line = line.rstrip('\r')
        if not line.strip() or line.startswith('#'):
            continue
        cols = line.split('\t')
        if len(cols) != 3:
            raise ParseError(f"需要 3 列（utt_id、score、label），实际 {len(cols)} 列", lineno)
        utt_id, raw_score, label = cols
        try:
            score = float(raw_score)
        except ValueError:
            raise ParseError(f"无法解析得分: {raw_score!r}", lineno)
        if not math.isfinite(score):
            raise ParseError(f"得分不是有限值: {raw_score!r}", lineno)
        if label not in LABELS:
            raise ParseError(f"未知标签: {label!r}", lineno)
        if utt_id in seen:
            raise ParseError(f"重复的 utt_id: {utt_id}", lineno)
        seen.add(utt_id)
        entries.append(ScoreEntry(utt_id, score, label))
    return ScoreSet(entries)


def read_scores(path) -> ScoreSet:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return parse_scores(f.read())
