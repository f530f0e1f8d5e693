# -*- coding: utf-8 -*-
"""流水线各阶段 — 提取 / 训练 / 打分 / 评测 / 实验网格

命令行与图形界面共用这些函数，实验网格中的每个单元与逐条手动执行命令得到相同结果。
"""

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from core.audio_io import load_audio
from core.config_loader import CLASSIFIERS, ExperimentConfig, dumps_config
from core.errors import HashMismatch, SingleClass, SpoofKitError
from core.feature_cache import (export_csv, is_up_to_date, read_feature_record, record_path,
                                write_feature_record)
from core.features import FEATURE_KINDS, FeatureConfig, extract_features
from core.gbdt import GbdtModel, gbdt_decision_function, gbdt_fit, pool_features
from core.gmm import GmmPairCm, gmm_pair_fit, gmm_score_utterance
from core.hashing import format_hash
from core.metrics import (CostParams, MetricReport, ScoreEntry, ScoreSet, eer_threshold, evaluate,
                          format_report, per_attack_breakdown)
from core.model_io import save_model
from core.protocol import DOMAINS, load_manifest, resolve_audio_path, select, validate_protocol
from core.score_io import write_scores

logger = logging.getLogger(__name__)

# (名称, 训练域)
EXPERIMENTS = (
    ('native', ('native',)),
    ('combined', ('native', 'nonnative')),
)
EXPERIMENT_LABELS = {'native': 'Native CM', 'combined': 'Combined CM'}
ERR = 'ERR'


# ── 提取 ─────────────────────────────────────────────────────

@dataclass
class ExtractReport:
    total: int = 0
    computed: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)     # [(utt_id, 错误信息)]

    @property
    def ok(self) -> bool:
        return not self.failures


def _extract_one(job):
    manifest_path, entry, cfg, cache_dir, csv_dir = job
    out = record_path(cache_dir, entry.utt_id)
    if is_up_to_date(out, cfg):
        return entry.utt_id, 'skipped', None
    try:
        clip = load_audio(resolve_audio_path(manifest_path, entry))
        clip.utt_id = entry.utt_id
        feats = extract_features(clip, cfg)
        write_feature_record(out, feats)
        if csv_dir is not None:
            export_csv(Path(csv_dir) / f"{entry.utt_id}.csv", feats)
    except (SpoofKitError, OSError, ValueError) as exc:
        return entry.utt_id, 'failed', f"{type(exc).__name__}: {exc}"
    return entry.utt_id, 'computed', None


def extract_stage(manifest_path, entries, cfg: FeatureConfig, cache_dir, jobs: int = 1,
                  csv_dir=None, progress: bool = False) -> ExtractReport:
    """为每条语音写一个缓存记录；哈希一致的记录跳过，单个文件失败只记入报告"""
    t0 = time.perf_counter()
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    if csv_dir is not None:
        Path(csv_dir).mkdir(parents=True, exist_ok=True)
    jobs_list = [(manifest_path, e, cfg, cache_dir, csv_dir) for e in entries]
    report = ExtractReport(total=len(jobs_list))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for utt_id, status, error in tqdm(pool.map(_extract_one, jobs_list), total=len(jobs_list),
                                          desc=f"extract {cfg.kind}", unit='utt',
                                          disable=not progress):
            if status == 'skipped':
                report.skipped += 1
            elif status == 'computed':
                report.computed += 1
            else:
                report.failures.append((utt_id, error))
    logger.info("%s 特征：新算 %d，跳过 %d，失败 %d（%.1f s）", cfg.kind, report.computed,
                report.skipped, len(report.failures), time.perf_counter() - t0)
    return report


def load_features(cache_dir, entries, cfg: FeatureConfig) -> dict:
    """读取缓存记录 {utt_id: FeatureMatrix}；任何一条哈希不符都会抛 HashMismatch"""
    return {e.utt_id: read_feature_record(record_path(cache_dir, e.utt_id), cfg, e.utt_id)
            for e in entries}


# ── 训练 ─────────────────────────────────────────────────────

def training_entries(entries, train_domains) -> tuple:
    """训练集 (bonafide, spoof)；缺少任一类别时抛 SingleClass"""
    train = select(entries, domains=train_domains, splits=('train',))
    bona = [e for e in train if e.label == 'bonafide']
    spoof = [e for e in train if e.label == 'spoof']
    if not bona or not spoof:
        raise SingleClass(f"{'+'.join(train_domains)} 训练集缺少 "
                          f"{'bonafide' if not bona else 'spoof'}")
    return bona, spoof


def train_model(exp: ExperimentConfig, feature_cfg: FeatureConfig, bona_feats, spoof_feats,
                classifier: str = None):
    """GMM 对在帧级训练；GBDT 在池化向量上训练。模型内嵌特征配置哈希"""
    classifier = classifier or exp.classifier
    t0 = time.perf_counter()
    if classifier == 'gmm':
        model = gmm_pair_fit(
            np.concatenate([f.values for f in bona_feats]),
            np.concatenate([f.values for f in spoof_feats]),
            K=exp.gmm.components, max_iter=exp.gmm.max_iter, seed=exp.seed,
            feature_config_hash=feature_cfg.hash, max_frames=exp.gmm.max_frames)
    else:
        samples = [pool_features(f) for f in bona_feats] + [pool_features(f) for f in spoof_feats]
        labels = [1] * len(bona_feats) + [0] * len(spoof_feats)
        model = gbdt_fit(samples, labels, exp.gbdt_params(classifier),
                         feature_config_hash=feature_cfg.hash)
    logger.info("%s/%s 训练完成（%.1f s）", feature_cfg.kind, classifier, time.perf_counter() - t0)
    return model


def train_stage(manifest_path, cache_dir, exp: ExperimentConfig, model_out=None):
    entries = load_manifest(manifest_path)
    cfg = exp.feature_config()
    bona, spoof = training_entries(entries, exp.train_domains)
    feats = load_features(cache_dir, bona + spoof, cfg)
    model = train_model(exp, cfg, [feats[e.utt_id] for e in bona], [feats[e.utt_id] for e in spoof])
    if model_out is not None:
        save_model(model, model_out)
    return model


# ── 打分 ─────────────────────────────────────────────────────

def check_model_hash(model, cfg: FeatureConfig) -> None:
    if model.feature_config_hash != cfg.hash:
        raise HashMismatch(f"模型特征配置哈希 {format_hash(model.feature_config_hash)} "
                           f"≠ 当前 {cfg.kind} 配置 {format_hash(cfg.hash)}")


def score_features(model, entries, feats: dict) -> ScoreSet:
    """得分越高越像 bonafide：GMM 为平均帧 LLR，GBDT 为原始得分"""
    if isinstance(model, GmmPairCm):
        scores = [gmm_score_utterance(model, feats[e.utt_id]) for e in entries]
    elif isinstance(model, GbdtModel):
        pooled = [pool_features(feats[e.utt_id]) for e in entries]
        scores = gbdt_decision_function(model, pooled).tolist() if pooled else []
    else:
        raise TypeError(f"不支持的模型类型: {type(model).__name__}")
    return ScoreSet([ScoreEntry(e.utt_id, float(s), e.label) for e, s in zip(entries, scores)])


def score_stage(model, entries, cache_dir, cfg: FeatureConfig, domains, split: str = 'eval',
                scores_out=None) -> ScoreSet:
    """哈希检查和全部记录读取都在打分之前完成"""
    check_model_hash(model, cfg)
    chosen = select(entries, domains=domains, splits=(split,))
    feats = load_features(cache_dir, chosen, cfg)
    scores = score_features(model, chosen, feats)
    if scores_out is not None:
        write_scores(scores_out, scores)
    return scores


# ── 评测 ─────────────────────────────────────────────────────

def evaluate_stage(scores: ScoreSet, params: CostParams = CostParams(), attack_of: dict = None):
    """返回 (总体 MetricReport, 按攻击分解 dict 或 None)"""
    report = evaluate(scores, params)
    logger.debug("EER 阈值 %.6g", eer_threshold(scores))
    breakdown = per_attack_breakdown(scores, attack_of, params) if attack_of else None
    return report, breakdown


def format_breakdown(breakdown: dict) -> str:
    return '\n'.join(f"  {attack}: {format_report(rep)}" for attack, rep in breakdown.items())


# ── 实验网格 ─────────────────────────────────────────────────

@dataclass
class GridCell:
    experiment: str
    feature: str
    classifier: str
    reports: dict = field(default_factory=dict)    # domain → MetricReport
    error: str = None

    @property
    def key(self) -> str:
        return f"{self.experiment}_{self.feature}_{self.classifier}"


@dataclass
class ExperimentResult:
    cells: list
    domains: tuple = DOMAINS
    metadata: dict = field(default_factory=dict)


def _metadata(exp: ExperimentConfig, features, classifiers) -> dict:
    return {
        'seed': exp.seed,
        'cost_params': f"c_miss={exp.cost_params.c_miss} c_fa={exp.cost_params.c_fa} "
                       f"pi_spf={exp.cost_params.pi_spf}",
        'features': ','.join(features),
        'classifiers': ','.join(classifiers),
        'feature_hashes': ','.join(f"{k}={format_hash(exp.feature_config(k).hash)}"
                                   for k in features),
        'dynamics': exp.feature_config(features[0]).dynamics if features else '',
        'pooling': 'mean+std (population)',
        'gmm_max_frames': exp.gmm.max_frames,
        'decision': 'score >= threshold -> bonafide',
    }


def _run_cell(cell: GridCell, exp: ExperimentConfig, cfg: FeatureConfig, entries, feats,
              train_domains, work_dir: Path) -> GridCell:
    try:
        bona, spoof = training_entries(entries, train_domains)
        model = train_model(exp, cfg, [feats[e.utt_id] for e in bona],
                            [feats[e.utt_id] for e in spoof], cell.classifier)
        save_model(model, work_dir / 'models' / f"{cell.key}.spcm")
        for domain in exp.eval_domains:
            # dev 指标只进日志
            dev = select(entries, domains=(domain,), splits=('dev',))
            if dev:
                try:
                    rep = evaluate(score_features(model, dev, feats), exp.cost_params)
                    logger.info("[dev] %s %s: %s", cell.key, domain, format_report(rep))
                except SpoofKitError as exc:
                    logger.warning("[dev] %s %s: %s", cell.key, domain, exc)
            chosen = select(entries, domains=(domain,), splits=('eval',))
            scores = score_features(model, chosen, feats)
            write_scores(work_dir / 'scores' / f"{cell.key}_{domain}.tsv", scores)
            cell.reports[domain] = evaluate(scores, exp.cost_params)
    except (SpoofKitError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        logger.error("%s 失败: %s", cell.key, cell.error)
    return cell


def _fail_cells(result: ExperimentResult, cells, error: str, on_cell) -> None:
    for cell, _ in cells:
        cell.error = error
        result.cells.append(cell)
        if on_cell is not None:
            on_cell(cell)


def run_experiment(manifest_path, exp: ExperimentConfig, work_dir, features=FEATURE_KINDS,
                   classifiers=CLASSIFIERS, experiments=EXPERIMENTS, jobs: int = 1,
                   progress: bool = False, on_cell=None, should_stop=None) -> ExperimentResult:
    """两个实验臂 × 特征 × 分类器，在两个域的 eval 集上评测

    单元失败只标记为 ERR，不中断网格；on_cell(cell) 在每个单元完成后回调（按网格顺序）。
    should_stop() 返回 True 时在下一个特征开始前停止。
    """
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    (work_dir / 'config.resolved.json').write_text(dumps_config(exp), encoding='utf-8')
    entries = load_manifest(manifest_path)
    validate_protocol(entries)
    features, classifiers = tuple(features), tuple(classifiers)
    result = ExperimentResult(cells=[], domains=tuple(exp.eval_domains),
                              metadata=_metadata(exp, features, classifiers))

    for kind in features:
        if should_stop is not None and should_stop():
            logger.warning("实验已中止")
            break
        cfg = exp.feature_config(kind)
        cache_dir = work_dir / 'cache' / kind
        report = extract_stage(manifest_path, entries, cfg, cache_dir, jobs=jobs, progress=progress)
        for utt_id, error in report.failures[:5]:
            logger.error("%s 提取失败 %s: %s", kind, utt_id, error)
        failed = {u for u, _ in report.failures}
        cells = [(GridCell(name, kind, clf), domains)
                 for name, domains in experiments for clf in classifiers]
        if failed:
            logger.warning("%s 共 %d 条语音提取失败，已从训练中剔除", kind, len(failed))
            result.metadata[f"dropped_{kind}"] = len(failed)
        # eval 集缺语音时该特征的单元一律记为 ERR
        lost = [e.utt_id for e in select(entries, domains=exp.eval_domains, splits=('eval',))
                if e.utt_id in failed]
        if lost:
            _fail_cells(result, cells, f"ExtractionFailed: {len(lost)} 条 eval 语音提取失败（{lost[0]} …）",
                        on_cell)
            continue
        usable = [e for e in entries if e.utt_id not in failed]
        try:
            feats = load_features(cache_dir, usable, cfg)
        except (SpoofKitError, OSError) as exc:
            _fail_cells(result, cells, f"{type(exc).__name__}: {exc}", on_cell)
            continue

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            done = pool.map(lambda c: _run_cell(c[0], exp, cfg, usable, feats, c[1], work_dir), cells)
            for cell in done:
                result.cells.append(cell)
                if on_cell is not None:
                    on_cell(cell)
        del feats

    order = {(name, kind, clf): i for i, (name, kind, clf) in enumerate(
        (n, k, c) for n, _ in experiments for k in features for c in classifiers)}
    result.cells.sort(key=lambda c: order[(c.experiment, c.feature, c.classifier)])
    return result


# ── 结果表 ───────────────────────────────────────────────────

_GRID_HEADER = ('Exp.', 'Feat.', 'Classifier')


def _grid_rows(result: ExperimentResult, fmt_dcf, fmt_eer):
    rows = []
    for cell in result.cells:
        row = [EXPERIMENT_LABELS.get(cell.experiment, cell.experiment),
               cell.feature.upper(), cell.classifier]
        for domain in result.domains:
            rep: MetricReport = cell.reports.get(domain)
            if rep is None:
                row += [ERR, ERR]
            else:
                row += [fmt_dcf(rep.min_dcf), fmt_eer(rep.eer)]
        rows.append(row)
    return rows


def grid_header(result: ExperimentResult) -> list:
    header = list(_GRID_HEADER)
    for domain in result.domains:
        header += [f"{domain} minDCF", f"{domain} EER(%)"]
    return header


def format_grid_text(result: ExperimentResult) -> str:
    """对齐文本表：minDCF 三位小数，EER 百分比两位小数"""
    header = grid_header(result)
    rows = _grid_rows(result, lambda v: f"{v:.3f}", lambda v: f"{100.0 * v:.2f}")
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = ['  '.join(str(h).ljust(w) for h, w in zip(header, widths))]
    lines.append('  '.join('-' * w for w in widths))
    for r in rows:
        lines.append('  '.join(str(c).ljust(w) for c, w in zip(r, widths)))
    return '\n'.join(lines) + '\n'


def dumps_grid_csv(result: ExperimentResult) -> str:
    """CSV：# 开头的元数据注释行 + 表头 + 行；数值用 repr 保留全部精度"""
    buf = io.StringIO()
    for key, value in result.metadata.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator='\n')
    header = grid_header(result)
    writer.writerow([h.replace('(%)', '') for h in header])
    writer.writerows(_grid_rows(result, lambda v: repr(float(v)), lambda v: repr(float(v))))
    return buf.getvalue()


def write_grid(result: ExperimentResult, csv_path=None, text_path=None) -> None:
    if csv_path is not None:
        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, 'w', encoding='utf-8', newline='') as f:
            f.write(dumps_grid_csv(result))
    if text_path is not None:
        Path(text_path).parent.mkdir(parents=True, exist_ok=True)
        with open(text_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(format_grid_text(result))
