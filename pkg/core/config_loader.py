# -*- coding: utf-8 -*-
"""实验配置 — JSON / YAML / TOML 读取、校验与命令行覆盖

依赖:
    pyyaml  — pip install pyyaml（仅 .yaml / .yml）
    toml    — pip install toml（仅 .toml）
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from core.errors import ConfigError
from core.features import FEATURE_KINDS, FeatureConfig
from core.gbdt import GbdtParams
from core.metrics import CostParams
from core.protocol import DOMAINS
from core.synthgen import DEFAULT_RECIPES, SpoofRecipe

CLASSIFIERS = ('gmm', 'gbdt_depthwise', 'gbdt_symmetric')

# 随仓库发布的默认实验配置（CQCC 几何已按桌面语料缩小）
DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / 'config' / 'experiment.json'


# ── 懒加载：给出清晰的错误提示 ───────────────────────────────
def _yaml():
    try:
        import yaml
        return yaml
    except ImportError:
        raise ImportError("请先安装 pyyaml：pip install pyyaml")


def _toml():
    try:
        import toml
        return toml
    except ImportError:
        raise ImportError("请先安装 toml：pip install toml")


# ── 格式常量 ──────────────────────────────────────────────────
FORMATS = {'.json': 'JSON', '.yaml': 'YAML', '.yml': 'YAML', '.toml': 'TOML'}


def _load(text: str, fmt: str) -> object:
    fmt = fmt.upper()
    if fmt == 'JSON':
        return json.loads(text)
    elif fmt == 'YAML':
        return _yaml().safe_load(text)
    elif fmt == 'TOML':
        return _toml().loads(text)
    else:
        raise ValueError(f"不支持的格式: {fmt}")


# ── 配置类型 ─────────────────────────────────────────────────

@dataclass(frozen=True)
class GmmSettings:
    components: int = 2
    max_iter: int = 100
    max_frames: int = 30000

    def __post_init__(self):
        if self.components < 1 or self.max_iter < 1 or self.max_frames < 0:
            raise ConfigError("gmm: components ≥ 1、max_iter ≥ 1、max_frames ≥ 0")


@dataclass(frozen=True)
class GbdtSettings:
    num_trees: int = 100
    depth: int = 6
    learning_rate: float = 0.1
    lam: float = 1.0

    def __post_init__(self):
        self.params('depthwise', 0)

    def params(self, preset: str, seed: int) -> GbdtParams:
        try:
            return GbdtParams(num_trees=self.num_trees, depth=self.depth,
                              learning_rate=self.learning_rate, lam=self.lam,
                              preset=preset, seed=seed)
        except ValueError as exc:
            raise ConfigError(f"gbdt: {exc}")


@dataclass(frozen=True)
class CorpusSettings:
    num_speakers_per_domain: int = 12
    utts_per_speaker: int = 20
    duration_range: tuple = (1.0, 2.0)
    recipes: tuple = DEFAULT_RECIPES

    def __post_init__(self):
        if self.num_speakers_per_domain < 3 or self.utts_per_speaker < 1:
            raise ConfigError("corpus: 每个域至少 3 个说话人，每人至少 1 条语音")
        lo, hi = self.duration_range
        if not 0.5 <= lo <= hi <= 20.0:
            raise ConfigError(f"corpus: duration_range {self.duration_range} 须满足 0.5 ≤ lo ≤ hi ≤ 20")
        if not self.recipes:
            raise ConfigError("corpus: recipes 不能为空")

    def to_dict(self) -> dict:
        return {'num_speakers_per_domain': self.num_speakers_per_domain,
                'utts_per_speaker': self.utts_per_speaker,
                'duration_range': list(self.duration_range),
                'recipes': [r.to_dict() for r in self.recipes]}


@dataclass(frozen=True)
class ExperimentConfig:
    feature: str = 'mfcc'
    classifier: str = 'gbdt_depthwise'
    train_domains: tuple = ('native',)
    eval_domains: tuple = DOMAINS
    seed: int = 42
    cost_params: CostParams = CostParams()
    feature_overrides: dict = field(default_factory=dict, hash=False)
    gmm: GmmSettings = GmmSettings()
    gbdt: GbdtSettings = GbdtSettings()
    corpus: CorpusSettings = CorpusSettings()

    def __post_init__(self):
        if self.feature not in FEATURE_KINDS:
            raise ConfigError(f"feature 取值非法: {self.feature}（可选 {', '.join(FEATURE_KINDS)}）")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"classifier 取值非法: {self.classifier}（可选 {', '.join(CLASSIFIERS)}）")
        for name in ('train_domains', 'eval_domains'):
            domains = getattr(self, name)
            if not domains:
                raise ConfigError(f"{name} 不能为空")
            bad = [d for d in domains if d not in DOMAINS]
            if bad:
                raise ConfigError(f"{name} 含未知域: {', '.join(bad)}")
        for kind, overrides in self.feature_overrides.items():
            if kind not in FEATURE_KINDS:
                raise ConfigError(f"feature_overrides 含未知特征类型: {kind}")
            self.feature_config(kind)      # 提前暴露非法覆盖

    def feature_config(self, kind: str = None) -> FeatureConfig:
        """kind 默认取 self.feature；套用该类型的 feature_overrides"""
        kind = kind or self.feature
        data = dict(self.feature_overrides.get(kind, {}))
        data['kind'] = kind
        try:
            return FeatureConfig.from_dict(data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"feature_overrides.{kind}: {exc}")

    def gbdt_params(self, classifier: str = None) -> GbdtParams:
        classifier = classifier or self.classifier
        return self.gbdt.params(classifier.split('_', 1)[1], self.seed)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        return config_from_dict(merge_dicts(self.to_dict(), overrides))

    def to_dict(self) -> dict:
        return {
            'feature': self.feature,
            'classifier': self.classifier,
            'train_domains': list(self.train_domains),
            'eval_domains': list(self.eval_domains),
            'seed': self.seed,
            'cost_params': asdict(self.cost_params),
            'feature_overrides': {k: dict(v) for k, v in sorted(self.feature_overrides.items())},
            'gmm': asdict(self.gmm),
            'gbdt': asdict(self.gbdt),
            'corpus': self.corpus.to_dict(),
        }


# ── 解析 ─────────────────────────────────────────────────────

def _check_keys(data, cls, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} 必须是对象")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where} 含未知字段: {', '.join(sorted(unknown))}")
    return data


def _domains(value) -> tuple:
    if isinstance(value, str):
        value = [v.strip() for v in value.split(',') if v.strip()]
    return tuple(sorted(set(value), key=lambda d: DOMAINS.index(d) if d in DOMAINS else len(DOMAINS)))


def resolve_recipes(items) -> tuple:
    """配方可写成攻击编号（取默认配方）或完整对象"""
    defaults = {r.attack_id: r for r in DEFAULT_RECIPES}
    if isinstance(items, str):
        items = [s.strip() for s in items.split(',') if s.strip()]
    recipes = []
    for item in items:
        if isinstance(item, str):
            if item not in defaults:
                raise ConfigError(f"未知配方: {item}（可选 {', '.join(defaults)}）")
            recipes.append(defaults[item])
        else:
            try:
                recipes.append(SpoofRecipe.from_dict(item))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"配方非法: {exc}")
    return tuple(recipes)


def _build(cls, data, where):
    try:
        return cls(**_check_keys(data, cls, where))
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}")


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(_check_keys(data or {}, ExperimentConfig, '配置'))
    if 'train_domains' in data:
        data['train_domains'] = _domains(data['train_domains'])
    if 'eval_domains' in data:
        data['eval_domains'] = _domains(data['eval_domains'])
    if 'seed' in data:
        data['seed'] = int(data['seed'])
    if 'cost_params' in data:
        cp = data['cost_params']
        if isinstance(cp, (list, tuple)):
            cp = dict(zip(('c_miss', 'c_fa', 'pi_spf'), cp))
        try:
            data['cost_params'] = _build(CostParams, cp, 'cost_params')
        except ValueError as exc:
            raise ConfigError(f"cost_params: {exc}")
    if 'feature_overrides' in data:
        fo = data['feature_overrides']
        if not isinstance(fo, dict):
            raise ConfigError("feature_overrides 必须是对象")
        data['feature_overrides'] = {k: dict(v) for k, v in fo.items()}
    if 'gmm' in data:
        data['gmm'] = _build(GmmSettings, data['gmm'], 'gmm')
    if 'gbdt' in data:
        data['gbdt'] = _build(GbdtSettings, data['gbdt'], 'gbdt')
    if 'corpus' in data:
        corpus = dict(_check_keys(data['corpus'], CorpusSettings, 'corpus'))
        if 'duration_range' in corpus:
            corpus['duration_range'] = tuple(float(v) for v in corpus['duration_range'])
        if 'recipes' in corpus:
            corpus['recipes'] = resolve_recipes(corpus['recipes'])
        data['corpus'] = _build(CorpusSettings, corpus, 'corpus')
    return ExperimentConfig(**data)


def merge_dicts(base: dict, overrides: dict) -> dict:
    """嵌套合并：对象逐键覆盖，其余值整体替换"""
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != 'feature_overrides':
            out[key] = merge_dicts(out[key], value)
        elif key == 'feature_overrides' and isinstance(out.get(key), dict):
            merged = dict(out[key])
            for kind, fields_ in value.items():
                merged[kind] = {**merged.get(kind, {}), **fields_}
            out[key] = merged
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict = None) -> ExperimentConfig:
    """读取配置文件（按扩展名选格式），再套用命令行覆盖；path 为 None 时用默认值

    Raises: ConfigError / ImportError / OSError
    """
    data = {}
    if path is not None:
        path = Path(path)
        fmt = FORMATS.get(path.suffix.lower())
        if fmt is None:
            raise ConfigError(f"不支持的配置格式: {path.suffix}（可选 {', '.join(FORMATS)}）")
        text = path.read_text(encoding='utf-8')
        try:
            data = _load(text, fmt) or {}
        except ImportError:
            raise
        except Exception as exc:      # JSONDecodeError / YAMLError / TomlDecodeError
            raise ConfigError(f"{path}: 配置解析失败: {exc}")
    if overrides:
        data = merge_dicts(data, overrides)
    return config_from_dict(data)


def default_config_path(path=None):
    """未指定配置文件时退回到仓库自带的 config/experiment.json（不存在则为 None）"""
    if path:
        return Path(path)
    return DEFAULT_CONFIG if DEFAULT_CONFIG.is_file() else None


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + '\n'
