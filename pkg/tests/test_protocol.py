# -*- coding: utf-8 -*-
from dataclasses import replace

import numpy as np
import pytest

from core.errors import DuplicateUtterance, InsufficientSpeakers, ParseError, SpeakerOverlap
from core.protocol import (HEADER, ManifestEntry, compute_stats, dumps_manifest,
                           find_speaker_overlaps, load_manifest, make_splits, parse_manifest,
                           protocol_stats_table, resolve_audio_path, save_manifest, select,
                           validate_protocol)

ATTACKS = ('A01', 'A02', 'A03', 'A04', 'A05', 'A06')


def _speaker_rows(domain, speaker, sex, split, n_bona, spoof_per_utt=6):
    rows = []
    for u in range(n_bona):
        utt = f"{speaker}_{u:04d}"
        rows.append(ManifestEntry(utt, f"wav/{utt}.wav", speaker, sex, domain, 'bonafide', '-', split))
        for a in ATTACKS[:spoof_per_utt]:
            rows.append(ManifestEntry(f"{utt}_{a}", f"wav/{utt}_{a}.wav", speaker, sex, domain,
                                      'spoof', a, split))
    return rows


def _corpus(domain='native', speakers=10, utts=5, split='-'):
    rows = []
    for i in range(speakers):
        sex = 'male' if i % 2 == 0 else 'female'
        rows += _speaker_rows(domain, f"{domain[:3].upper()}{i:02d}", sex, split, utts)
    return rows


# ── 读写 ─────────────────────────────────────────────────────

def test_manifest_roundtrip(tmp_path):
    entries = _corpus(speakers=3, utts=2, split='train')
    path = save_manifest(tmp_path / 'm.tsv', entries)
    assert path.read_text(encoding='utf-8').splitlines()[0] == HEADER
    assert load_manifest(path) == entries
    assert resolve_audio_path(path, entries[0]) == tmp_path / 'wav' / 'NAT00_0000.wav'


@pytest.mark.parametrize('body,line', [
    ("a\twav/a.wav\tS1\tmale\tnative\tbonafide\t-\n", 2),
    ("a\twav/a.wav\tS1\tmale\tmars\tbonafide\t-\ttrain\n", 2),
    ("a\twav/a.wav\tS1\tmale\tnative\tbonafide\t-\ttrain\n"
     "b\twav/b.wav\tS1\tmale\tnative\tspoof\t-\ttrain\n", 3),
    ("a\twav/a.wav\tS1\tmale\tnative\tbonafide\tA01\ttrain\n", 2),
    ("a\twav/a.wav\tS1\tmale\tnative\tbonafide\t-\tholdout\n", 2),
])
def test_parse_errors_carry_line_numbers(body, line):
    with pytest.raises(ParseError) as info:
        parse_manifest(HEADER + '\n' + body)
    assert info.value.line == line


def test_missing_header():
    with pytest.raises(ParseError) as info:
        parse_manifest("a\tb\n")
    assert info.value.line == 1


def test_duplicate_utterance():
    row = "a\twav/a.wav\tS1\tmale\tnative\tbonafide\t-\ttrain\n"
    with pytest.raises(DuplicateUtterance):
        parse_manifest(HEADER + '\n' + row + row)


def test_select():
    entries = _corpus('native', 2, 1, 'train') + _corpus('nonnative', 2, 1, 'eval')
    assert {e.domain for e in select(entries, domains=('nonnative',))} == {'nonnative'}
    assert select(entries, splits=('dev',)) == []
    assert len(select(entries, labels=('bonafide',))) == 4


# ── 统计 ─────────────────────────────────────────────────────

def test_table_one_native_counts():
    entries = []
    for split, bona, speakers in (('train', 5590, 26), ('dev', 800, 6), ('eval', 1600, 12)):
        per, extra = divmod(bona, speakers)
        for i in range(speakers):
            sex = 'male' if i % 2 == 0 else 'female'
            entries += _speaker_rows('native', f"{split}{i:02d}", sex, split,
                                     per + (1 if i < extra else 0))
    stats = validate_protocol(entries)
    assert (stats['native', 'train'].bonafide, stats['native', 'train'].spoof) == (5590, 33540)
    assert (stats['native', 'dev'].bonafide, stats['native', 'dev'].spoof) == (800, 4800)
    assert (stats['native', 'eval'].bonafide, stats['native', 'eval'].spoof) == (1600, 9600)
    assert stats['native', 'train'].bonafide_speakers == {'male': 13, 'female': 13}
    assert stats['native', 'eval'].attacks == ATTACKS
    assert stats.warnings == []
    table = protocol_stats_table(stats)
    assert '5,590' in table and '33,540' in table and '9,600' in table


def test_ratio_warning():
    entries = [replace(e, split='train') for e in _corpus(speakers=3, utts=2)]
    entries = [e for e in entries if e.attack_id not in ('A05', 'A06')]
    stats = validate_protocol(entries)
    assert len(stats.warnings) == 1
    assert 'native/train' in stats.warnings[0]


def test_speaker_overlap():
    entries = _corpus(speakers=3, utts=2, split='train')
    entries[-1] = replace(entries[-1], split='eval')
    assert find_speaker_overlaps(entries) == {('native', 'NAT02'): ['train', 'eval']}
    with pytest.raises(SpeakerOverlap) as info:
        validate_protocol(entries)
    assert info.value.speakers == ['NAT02']


def test_unassigned_is_rejected():
    with pytest.raises(ValueError):
        validate_protocol(_corpus(speakers=3, utts=1))


# ── 划分 ─────────────────────────────────────────────────────

def test_make_splits_is_speaker_disjoint_and_deterministic():
    entries = _corpus('native', 10, 4) + _corpus('nonnative', 10, 4)
    a = make_splits(entries, seed=3)
    b = make_splits(entries, seed=3)
    assert a == b
    assert find_speaker_overlaps(a) == {}
    stats = compute_stats(a)
    for domain in ('native', 'nonnative'):
        counts = [stats[domain, s].bonafide for s in ('train', 'dev', 'eval')]
        assert counts == [28, 4, 8]
    validate_protocol(a)
    assert dumps_manifest(a).count('\n') == len(a) + 1


@pytest.mark.parametrize('seed', range(25))
def test_make_splits_on_random_manifests(seed):
    rng = np.random.default_rng(seed)
    entries = []
    for domain in ('native', 'nonnative'):
        for i in range(int(rng.integers(3, 21))):
            entries += _speaker_rows(domain, f"{domain[:3].upper()}{i:02d}", ('male', 'female')[i % 2],
                                     '-', int(rng.integers(1, 7)), int(rng.integers(1, 7)))
    out = make_splits(entries, seed=seed)
    assert [e.utt_id for e in out] == [e.utt_id for e in entries]
    assert find_speaker_overlaps(out) == {}
    for (domain, split), cell in compute_stats(out).cells.items():
        assert split in ('train', 'dev', 'eval')
        assert cell.bonafide > 0 and cell.spoof > 0, (domain, split)
    validate_protocol(out)


def test_make_splits_needs_three_speakers():
    with pytest.raises(InsufficientSpeakers):
        make_splits(_corpus(speakers=2, utts=3))


def test_make_splits_rejects_bad_ratios():
    with pytest.raises(ValueError):
        make_splits(_corpus(speakers=4, utts=1), ratios=(0.5, 0.5, 0.5))
