#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
SpoofKit 命令行入口

用法:
    python cli.py synth --out data/corpus                       # 生成默认合成语料
    python cli.py manifest validate data/corpus/manifest.tsv    # 统计并校验协议
    python cli.py extract --manifest data/corpus/manifest.tsv --feature lfcc --cache-dir work/cache/lfcc
    python cli.py train --manifest ... --cache-dir ... --feature lfcc --classifier gmm --model-out work/lfcc_gmm.spcm
    python cli.py score --model work/lfcc_gmm.spcm --manifest ... --cache-dir ... --eval-domain nonnative --scores-out s.tsv
    python cli.py evaluate s.tsv [--manifest ...]               # minDCF / EER（可按攻击分解）
    python cli.py experiment --manifest ... --work-dir work     # 完整实验网格（Native CM / Combined CM）

退出码:
    0  成功
    1  运行期/数据错误
    2  用法错误（参数、配置非法、未知配方名）
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from colorama import Fore, Style, just_fix_windows_console

from core.config_loader import CLASSIFIERS, DEFAULT_CONFIG, default_config_path, load_config
from core.errors import ConfigError, SpoofKitError
from core.features import FEATURE_KINDS
from core.metrics import format_report
from core.model_io import load_model, save_model
from core.pipeline import (evaluate_stage, extract_stage, format_breakdown, format_grid_text,
                           run_experiment, score_stage, train_stage, write_grid)
from core.protocol import (DOMAINS, SPLITS, load_manifest, make_splits, protocol_stats_table,
                           save_manifest, validate_protocol)
from core.score_io import read_scores
from core.synthgen import MANIFEST_NAME, build_corpus

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


# ── 日志 ──────────────────────────────────────────────────────

def log(msg):
    print(f"  [*] {msg}")


def log_ok(msg):
    print(f"  {Fore.GREEN}[OK]{Style.RESET_ALL} {msg}")


def log_warn(msg):
    print(f"  {Fore.YELLOW}[WARN]{Style.RESET_ALL} {msg}")


def log_err(msg):
    print(f"  {Fore.RED}[ERROR]{Style.RESET_ALL} {msg}", file=sys.stderr)


class _PrefixFormatter(logging.Formatter):
    """core 模块的日志沿用 [*] / [WARN] / [ERROR] 前缀"""

    PREFIX = {
        logging.DEBUG: f"{Style.DIM}[debug]{Style.RESET_ALL}",
        logging.INFO: "[*]",
        logging.WARNING: f"{Fore.YELLOW}[WARN]{Style.RESET_ALL}",
        logging.ERROR: f"{Fore.RED}[ERROR]{Style.RESET_ALL}",
        logging.CRITICAL: f"{Fore.RED}[ERROR]{Style.RESET_ALL}",
    }

    def format(self, record):
        prefix = self.PREFIX.get(record.levelno, "[*]")
        return f"  {prefix} {record.getMessage()}"


def setup_logging(verbose: bool = False) -> None:
    just_fix_windows_console()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_PrefixFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


# ── 配置参数 ─────────────────────────────────────────────────

class UsageError(Exception):
    """带参数名的用法错误，退出码 2"""


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(',') if s.strip()]


def _json_flag(value: str, flag: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{flag}: 不是合法的 JSON（{exc.msg}）")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group('实验配置（覆盖配置文件中的同名字段）')
    g.add_argument('--config', default=None,
                   help=f"配置文件 .json/.yaml/.toml (默认: {DEFAULT_CONFIG.name}，若存在)")
    g.add_argument('--feature', choices=FEATURE_KINDS, default=None)
    g.add_argument('--classifier', choices=CLASSIFIERS, default=None)
    g.add_argument('--train-domains', default=None, help="逗号分隔，如 native,nonnative")
    g.add_argument('--eval-domains', default=None, help="逗号分隔")
    g.add_argument('--seed', type=int, default=None)
    g.add_argument('--cost-params', default=None, help="c_miss,c_fa,pi_spf (默认 1,10,0.05)")
    g.add_argument('--feature-overrides', default=None,
                   help='JSON，如 \'{"cqcc": {"cqt_bins_per_octave": 24}}\'')
    g.add_argument('--gmm', default=None, help='JSON，如 \'{"components": 2}\'')
    g.add_argument('--gbdt', default=None, help='JSON，如 \'{"num_trees": 50}\'')
    g.add_argument('--corpus', default=None, help='JSON，如 \'{"utts_per_speaker": 10}\'')


def build_config(args):
    overrides = {}
    for name in ('feature', 'classifier', 'seed'):
        if getattr(args, name, None) is not None:
            overrides[name] = getattr(args, name)
    for name in ('train_domains', 'eval_domains'):
        value = getattr(args, name, None)
        if value is not None:
            bad = [d for d in _csv_list(value) if d not in DOMAINS]
            if bad or not _csv_list(value):
                raise UsageError(f"--{name.replace('_', '-')}: 未知域 {', '.join(bad) or '(空)'}")
            overrides[name] = _csv_list(value)
    if getattr(args, 'cost_params', None) is not None:
        try:
            overrides['cost_params'] = [float(v) for v in _csv_list(args.cost_params)]
        except ValueError:
            raise UsageError("--cost-params: 需要三个数 c_miss,c_fa,pi_spf")
        if len(overrides['cost_params']) != 3:
            raise UsageError("--cost-params: 需要三个数 c_miss,c_fa,pi_spf")
    for name in ('feature_overrides', 'gmm', 'gbdt', 'corpus'):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = _json_flag(value, f"--{name.replace('_', '-')}")
    recipes = getattr(args, 'recipes', None)
    if recipes is not None:
        overrides.setdefault('corpus', {})['recipes'] = _csv_list(recipes)

    try:
        return load_config(default_config_path(args.config), overrides)
    except ConfigError as exc:
        if recipes is not None and '配方' in str(exc):
            raise UsageError(f"--recipes: {exc}")
        raise


def _progress() -> bool:
    return sys.stderr.isatty()


# ── 子命令 ───────────────────────────────────────────────────

def cmd_synth(args) -> int:
    exp = build_config(args)
    c = exp.corpus
    log(f"生成语料：每域 {c.num_speakers_per_domain} 人 × {c.utts_per_speaker} 条，"
        f"{len(c.recipes)} 个配方，seed={exp.seed}")
    build_corpus(c.num_speakers_per_domain, c.utts_per_speaker, c.recipes, exp.seed, args.out,
                 duration_range=c.duration_range, jobs=args.jobs, progress=_progress())
    manifest = Path(args.out) / MANIFEST_NAME
    log_ok(f"清单: {manifest}")
    print(manifest)
    return EXIT_OK


def cmd_extract(args) -> int:
    exp = build_config(args)
    cfg = exp.feature_config()
    entries = load_manifest(args.manifest)
    report = extract_stage(args.manifest, entries, cfg, args.cache_dir, jobs=args.jobs,
                           csv_dir=args.csv, progress=_progress())
    log_ok(f"{cfg.kind}（维度 {cfg.dim}）：共 {report.total}，新算 {report.computed}，"
           f"缓存命中 {report.skipped}")
    if report.failures:
        for utt_id, error in report.failures:
            log_err(f"{utt_id}: {error}")
        log_err(f"{len(report.failures)} 条语音提取失败")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_train(args) -> int:
    exp = build_config(args)
    model = train_stage(args.manifest, args.cache_dir, exp)
    save_model(model, args.model_out)
    log_ok(f"{exp.feature}/{exp.classifier} 模型（训练域 {'+'.join(exp.train_domains)}）"
           f"→ {args.model_out}")
    return EXIT_OK


def cmd_score(args) -> int:
    exp = build_config(args)
    model = load_model(args.model)
    entries = load_manifest(args.manifest)
    scores = score_stage(model, entries, args.cache_dir, exp.feature_config(),
                         (args.eval_domain,), args.split, args.scores_out)
    log_ok(f"{len(scores)} 条得分 → {args.scores_out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    exp = build_config(args)
    scores = read_scores(args.scores)
    attack_of = None
    if args.manifest:
        attack_of = {e.utt_id: e.attack_id for e in load_manifest(args.manifest)}
    report, breakdown = evaluate_stage(scores, exp.cost_params, attack_of)
    print(format_report(report))
    if breakdown:
        print(format_breakdown(breakdown))
    return EXIT_OK


def cmd_experiment(args) -> int:
    exp = build_config(args)
    work_dir = Path(args.work_dir)
    manifest = args.manifest
    if args.synth:
        c = exp.corpus
        corpus_dir = work_dir / 'corpus'
        build_corpus(c.num_speakers_per_domain, c.utts_per_speaker, c.recipes, exp.seed,
                     corpus_dir, duration_range=c.duration_range, jobs=args.jobs,
                     progress=_progress())
        manifest = corpus_dir / MANIFEST_NAME
    if manifest is None:
        raise UsageError("--manifest: 需要指定清单，或使用 --synth 先生成语料")

    features = _csv_list(args.features) if args.features else list(FEATURE_KINDS)
    classifiers = _csv_list(args.classifiers) if args.classifiers else list(CLASSIFIERS)
    bad = [f for f in features if f not in FEATURE_KINDS]
    if bad:
        raise UsageError(f"--features: 未知特征 {', '.join(bad)}")
    bad = [c for c in classifiers if c not in CLASSIFIERS]
    if bad:
        raise UsageError(f"--classifiers: 未知分类器 {', '.join(bad)}")

    result = run_experiment(manifest, exp, work_dir, features, classifiers, jobs=args.jobs,
                            progress=_progress())
    csv_path = Path(args.out_csv) if args.out_csv else work_dir / 'results.csv'
    text_path = work_dir / 'results.txt'
    write_grid(result, csv_path, text_path)
    print(format_grid_text(result), end='')
    failed = sum(1 for c in result.cells if c.error)
    if failed:
        log_warn(f"{failed} 个单元失败（表中标记为 ERR）")
    log_ok(f"结果: {csv_path}")
    return EXIT_OK


def cmd_manifest_validate(args) -> int:
    entries = load_manifest(args.manifest)
    stats = validate_protocol(entries)
    print(protocol_stats_table(stats))
    if stats.warnings:
        log_warn(f"{len(stats.warnings)} 条比例警告")
    log_ok(f"{len(entries)} 条语音，说话人无跨集合重叠")
    return EXIT_OK


def cmd_manifest_split(args) -> int:
    try:
        ratios = tuple(float(v) for v in _csv_list(args.ratios))
    except ValueError:
        raise UsageError("--ratios: 需要三个数，如 0.7,0.1,0.2")
    if len(ratios) != 3:
        raise UsageError("--ratios: 需要三个数，如 0.7,0.1,0.2")
    entries = make_splits(load_manifest(args.manifest), ratios, args.seed)
    validate_protocol(entries)
    out = save_manifest(args.out or args.manifest, entries)
    log_ok(f"已划分 → {out}")
    return EXIT_OK


# ── 主流程 ────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cli.py', description="SpoofKit 语音防伪工具箱",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="示例:\n"
               "  python cli.py experiment --synth --work-dir work      # 生成语料并跑完整网格\n",
    )
    parser.add_argument('-v', '--verbose', action='store_true', help="输出调试日志")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help="生成合成语料与清单")
    p.add_argument('--out', required=True, help="输出目录")
    p.add_argument('--recipes', default=None, help="逗号分隔的配方编号，如 A01,A02")
    p.add_argument('--jobs', type=int, default=1)
    _add_config_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('extract', help="提取特征到缓存")
    p.add_argument('--manifest', required=True)
    p.add_argument('--cache-dir', required=True)
    p.add_argument('--jobs', type=int, default=1)
    p.add_argument('--csv', default=None, help="同时导出每条语音的 CSV 到该目录")
    _add_config_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser('train', help="训练反制模型")
    p.add_argument('--manifest', required=True)
    p.add_argument('--cache-dir', required=True)
    p.add_argument('--model-out', required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('score', help="对某个域的某个集合打分")
    p.add_argument('--model', required=True)
    p.add_argument('--manifest', required=True)
    p.add_argument('--cache-dir', required=True)
    p.add_argument('--eval-domain', choices=DOMAINS, required=True)
    p.add_argument('--split', choices=SPLITS, default='eval')
    p.add_argument('--scores-out', required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser('evaluate', help="计算 minDCF 与 EER")
    p.add_argument('scores', help="分数文件")
    p.add_argument('--manifest', default=None, help="给出时按攻击分解")
    _add_config_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('experiment', help="完整实验网格")
    p.add_argument('--manifest', default=None)
    p.add_argument('--synth', action='store_true', help="先在 <work-dir>/corpus 生成语料")
    p.add_argument('--work-dir', required=True)
    p.add_argument('--features', default=None, help="逗号分隔 (默认全部)")
    p.add_argument('--classifiers', default=None, help="逗号分隔 (默认全部)")
    p.add_argument('--jobs', type=int, default=1)
    p.add_argument('--out-csv', default=None)
    _add_config_args(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser('manifest', help="清单工具")
    msub = p.add_subparsers(dest='manifest_command', required=True)
    mp = msub.add_parser('validate', help="统计并校验协议")
    mp.add_argument('manifest')
    mp.set_defaults(func=cmd_manifest_validate)
    mp = msub.add_parser('split', help="说话人不相交的 train/dev/eval 划分")
    mp.add_argument('manifest')
    mp.add_argument('--ratios', default='0.7,0.1,0.2')
    mp.add_argument('--seed', type=int, default=42)
    mp.add_argument('--out', default=None, help="默认覆盖原清单")
    mp.set_defaults(func=cmd_manifest_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        log_err(str(exc))
        return EXIT_USAGE
    except (SpoofKitError, OSError, ImportError, ValueError) as exc:
        log_err(f"{type(exc).__name__}: {exc}")
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
