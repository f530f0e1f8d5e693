# -*- coding: utf-8 -*-
import json
import logging
from dataclasses import replace

import pytest

from cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from core.protocol import load_manifest, save_manifest, select

SMALL_GBDT = ['--gbdt', '{"num_trees": 5, "depth": 2}']


@pytest.fixture(autouse=True)
def _restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def _scores(tmp_path, rows, name='s.tsv'):
    path = tmp_path / name
    path.write_text(''.join(f"{u}\t{s!r}\t{lab}\n" for u, s, lab in rows), encoding='utf-8')
    return str(path)


# ── evaluate ─────────────────────────────────────────────────

def test_evaluate_hand_file(tmp_path, capsys):
    path = _scores(tmp_path, [('b1', 0.9, 'bonafide'), ('b2', 0.4, 'bonafide'),
                              ('s1', 0.8, 'spoof'), ('s2', 0.1, 'spoof')])
    assert main(['evaluate', path]) == EXIT_OK
    assert "minDCF 0.500, EER 50.00% (bonafide 2, spoof 2)" in capsys.readouterr().out


def test_evaluate_separable_file(tmp_path, capsys):
    path = _scores(tmp_path, [('b1', 2.0, 'bonafide'), ('s1', -2.0, 'spoof')])
    assert main(['evaluate', path]) == EXIT_OK
    assert "minDCF 0.000, EER 0.00%" in capsys.readouterr().out


def test_evaluate_cost_params_flag(tmp_path, capsys):
    path = _scores(tmp_path, [('b1', 0.9, 'bonafide'), ('b2', 0.4, 'bonafide'),
                              ('s1', 0.8, 'spoof'), ('s2', 0.1, 'spoof')])
    assert main(['evaluate', path, '--cost-params', '1,1,0.5']) == EXIT_OK
    # β = 1：τ ∈ (0.1, 0.4] 与 τ ∈ (0.8, 0.9] 都给出 0.5
    assert "minDCF 0.500" in capsys.readouterr().out


@pytest.mark.parametrize('rows', [
    [('s1', 0.8, 'spoof'), ('s2', 0.1, 'spoof')],
    [('b1', 0.8, 'genuine')],
])
def test_evaluate_data_errors(tmp_path, rows):
    assert main(['evaluate', _scores(tmp_path, rows)]) == EXIT_FAILURE


def test_evaluate_missing_file(tmp_path):
    assert main(['evaluate', str(tmp_path / 'nope.tsv')]) == EXIT_FAILURE


# ── 用法错误 ─────────────────────────────────────────────────

@pytest.mark.parametrize('argv', [
    [],
    ['fly'],
    ['train', '--manifest', 'm.tsv'],
    ['evaluate', 's.tsv', '--feature', 'plp'],
    ['evaluate', 's.tsv', '--cost-params', '1,10'],
    ['evaluate', 's.tsv', '--gbdt', '{trees: 5'],
    ['evaluate', 's.tsv', '--eval-domains', 'mars'],
    ['evaluate', 's.tsv', '--gmm', '{"components": 0}'],
    ['manifest', 'split', 'm.tsv', '--ratios', '0.5,0.5'],
])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_unknown_recipe_names_the_flag(tmp_path, capsys):
    code = main(['synth', '--out', str(tmp_path / 'c'), '--recipes', 'A01,A99'])
    assert code == EXIT_USAGE
    err = capsys.readouterr().err
    assert '--recipes' in err and 'A99' in err
    assert not (tmp_path / 'c').exists()


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / 'exp.json'
    cfg.write_text(json.dumps({'feature': 'mfcc', 'colour': 'blue'}), encoding='utf-8')
    assert main(['evaluate', 's.tsv', '--config', str(cfg)]) == EXIT_USAGE


def test_experiment_needs_a_corpus(tmp_path, small_corpus):
    assert main(['experiment', '--work-dir', str(tmp_path)]) == EXIT_USAGE
    manifest, _entries = small_corpus
    assert main(['experiment', '--manifest', str(manifest), '--work-dir', str(tmp_path),
                 '--features', 'plp']) == EXIT_USAGE


# ── 清单 ─────────────────────────────────────────────────────

def test_manifest_validate(small_corpus, capsys):
    manifest, _entries = small_corpus
    assert main(['manifest', 'validate', str(manifest)]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'Bonafide' in out and 'nonnative' in out


def test_manifest_validate_rejects_overlap(small_corpus, tmp_path):
    _manifest, entries = small_corpus
    bad = list(entries)
    first = bad[0]
    moved = 'eval' if first.split != 'eval' else 'train'
    bad[0] = replace(first, split=moved)
    path = save_manifest(tmp_path / 'bad.tsv', bad)
    assert main(['manifest', 'validate', str(path)]) == EXIT_FAILURE


def test_manifest_split(small_corpus, tmp_path):
    manifest, entries = small_corpus
    out = tmp_path / 'resplit.tsv'
    assert main(['manifest', 'split', str(manifest), '--seed', '5', '--out', str(out)]) == EXIT_OK
    resplit = load_manifest(out)
    assert [e.utt_id for e in resplit] == [e.utt_id for e in entries]
    assert main(['manifest', 'validate', str(out)]) == EXIT_OK


# ── 流水线 ───────────────────────────────────────────────────

def test_extract_train_score_evaluate(small_corpus, tmp_path, capsys):
    manifest, entries = small_corpus
    common = ['--manifest', str(manifest), '--cache-dir', str(tmp_path / 'cache'),
              '--feature', 'mfcc']
    assert main(['extract', *common, '--jobs', '2']) == EXIT_OK
    assert main(['train', *common, '--classifier', 'gbdt_symmetric', *SMALL_GBDT,
                 '--model-out', str(tmp_path / 'm.spcm')]) == EXIT_OK
    scores = tmp_path / 'scores.tsv'
    assert main(['score', '--model', str(tmp_path / 'm.spcm'), *common,
                 '--eval-domain', 'nonnative', '--scores-out', str(scores)]) == EXIT_OK
    expected = select(entries, domains=('nonnative',), splits=('eval',))
    assert len(scores.read_text(encoding='utf-8').splitlines()) == len(expected)

    capsys.readouterr()
    assert main(['evaluate', str(scores), '--manifest', str(manifest)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith('minDCF ')
    assert [line.split(':')[0].strip() for line in out[1:]] == ['A01', 'A02', 'A03', 'A04',
                                                                'A05', 'A06']

    # 换特征后缓存与模型不匹配
    assert main(['score', '--model', str(tmp_path / 'm.spcm'), '--manifest', str(manifest),
                 '--cache-dir', str(tmp_path / 'cache'), '--feature', 'lfcc',
                 '--eval-domain', 'native', '--scores-out', str(tmp_path / 'x.tsv')]) == EXIT_FAILURE


def test_experiment_command(small_corpus, tmp_path, capsys):
    manifest, _entries = small_corpus
    work = tmp_path / 'work'
    assert main(['experiment', '--manifest', str(manifest), '--work-dir', str(work),
                 '--features', 'lfcc', '--classifiers', 'gbdt_depthwise', *SMALL_GBDT]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'Native CM' in out and 'Combined CM' in out
    csv_text = (work / 'results.csv').read_text(encoding='utf-8')
    rows = [line for line in csv_text.splitlines() if not line.startswith('#')]
    assert len(rows) == 3
    assert (work / 'results.txt').read_text(encoding='utf-8') in out
