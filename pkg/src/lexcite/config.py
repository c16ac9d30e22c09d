"""Run configuration: one nested YAML/JSON file plus command-line overrides."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .corpus import SplitSpec
from .embeddings import EmbedConfig
from .textprep import PrepConfig, read_word_list
from .textprep.clean import default_boilerplate, default_stopwords

DATA_ENV = "LEXCITE_DATA_DIR"
CONFIG_ECHO = "resolved_config.json"


class ConfigError(ValueError):
    pass


def data_root() -> Path:
    return Path(os.environ.get(DATA_ENV, "data"))


@dataclass
class SplitSettings:
    train_fraction: float = 0.75
    validation_fraction_of_train: float = 0.10


@dataclass
class PrepSettings:
    mode: str = "lemmatized"
    min_token_length: int = 3
    include_title: bool = False
    stopwords_file: str | None = None
    boilerplate_file: str | None = None


@dataclass
class EmbedSettings:
    dim: int = 500
    window: int = 3
    min_count: int = 2
    minn: int = 3
    maxn: int = 6
    buckets: int = 2_000_000
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.05


@dataclass
class ModelSettings:
    kernel_sizes: list = field(default_factory=lambda: [2, 3, 5])
    filters: int = 128
    dropout: float = 0.4
    seq_len: int = 400
    fine_tune: bool = True
    embedding_init: str = "pretrained"
    class_weights: str = "none"  # or "inverse-frequency"
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 3
    oov_subwords: bool = True


@dataclass
class EvalSettings:
    sigma: float = 0.05
    knn_k: int = 5
    knn_mode: str = "lemmatized"
    ablation_kernels: list = field(default_factory=lambda: [[3], [3, 4], [2, 3, 5]])


@dataclass
class BenchSettings:
    reps: int = 100
    warmup: int = 10
    docs: int = 10


@dataclass
class RunConfig:
    corpus: str | None = None
    out: str | None = None
    seed: int = 42
    split: SplitSettings = field(default_factory=SplitSettings)
    prep: PrepSettings = field(default_factory=PrepSettings)
    embed: EmbedSettings = field(default_factory=EmbedSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)

    # ------------------------------------------------------------ resolution

    @property
    def corpus_path(self) -> Path:
        return Path(self.corpus) if self.corpus else data_root() / "corpus.csv"

    @property
    def out_dir(self) -> Path:
        return Path(self.out) if self.out else data_root() / "run"

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.split.train_fraction, self.split.validation_fraction_of_train, self.seed)

    def prep_config(self, mode: str | None = None) -> PrepConfig:
        p = self.prep
        stop = read_word_list(p.stopwords_file) if p.stopwords_file else default_stopwords()
        boiler = read_word_list(p.boilerplate_file) if p.boilerplate_file else default_boilerplate()
        return PrepConfig(mode or p.mode, frozenset(stop), p.min_token_length, tuple(boiler), p.include_title)

    def embed_config(self) -> EmbedConfig:
        return EmbedConfig(**asdict(self.embed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["corpus"] = str(self.corpus_path)
        d["out"] = str(self.out_dir)
        return d

    def write_echo(self, directory) -> Path:
        path = Path(directory) / CONFIG_ECHO
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


_SECTIONS = {f.name: f.type for f in fields(RunConfig)}
_SECTION_TYPES = {
    "split": SplitSettings, "prep": PrepSettings, "embed": EmbedSettings,
    "model": ModelSettings, "eval": EvalSettings, "bench": BenchSettings,
}


def from_dict(d: dict) -> RunConfig:
    """Build a RunConfig from nested dicts; unknown keys are errors."""
    d = dict(d or {})
    kwargs = {}
    for key, value in d.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key {key!r}")
        cls = _SECTION_TYPES.get(key)
        if cls is None:
            kwargs[key] = value
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"config section {key!r} must be a mapping")
        known = {f.name for f in fields(cls)}
        bad = sorted(set(value) - known)
        if bad:
            raise ConfigError(f"unknown key(s) in section {key!r}: {', '.join(bad)}")
        kwargs[key] = cls(**value)
    rc = RunConfig(**kwargs)
    validate(rc)
    return rc


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: cannot parse config ({e})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data or {})


def parse_kernels(text: str) -> list:
    try:
        ks = [int(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError:
        raise ConfigError(f"--kernels expects a comma-separated list of integers, got {text!r}") from None
    if not ks:
        raise ConfigError("--kernels needs at least one kernel size")
    return ks


def validate(rc: RunConfig) -> None:
    if rc.prep.mode not in ("stemmed", "lemmatized"):
        raise ConfigError(f"prep.mode must be 'stemmed' or 'lemmatized', got {rc.prep.mode!r}")
    if rc.eval.knn_mode not in ("stemmed", "lemmatized"):
        raise ConfigError(f"eval.knn_mode must be 'stemmed' or 'lemmatized', got {rc.eval.knn_mode!r}")
    if rc.model.class_weights not in ("none", "inverse-frequency"):
        raise ConfigError(f"model.class_weights must be 'none' or 'inverse-frequency', got {rc.model.class_weights!r}")
    if rc.model.embedding_init not in ("pretrained", "random"):
        raise ConfigError(f"model.embedding_init must be 'pretrained' or 'random', got {rc.model.embedding_init!r}")
    if rc.eval.sigma < 0:
        raise ConfigError("eval.sigma must be >= 0")
    if rc.bench.reps < 1 or rc.bench.warmup < 0 or rc.bench.docs < 1:
        raise ConfigError("bench.reps >= 1, bench.warmup >= 0 and bench.docs >= 1 required")
    try:
        rc.split_spec()
        rc.embed_config()
    except ValueError as e:
        raise ConfigError(str(e)) from None


def apply_overrides(rc: RunConfig, args) -> RunConfig:
    """Fold parsed command-line flags into ``rc`` (flags left at None are ignored)."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    if get("corpus") is not None:
        rc.corpus = get("corpus")
    if get("out") is not None:
        rc.out = get("out")
    if get("seed") is not None:
        rc.seed = int(get("seed"))
    if get("mode") is not None:
        rc.prep.mode = get("mode")
    if get("kernels") is not None:
        rc.model.kernel_sizes = parse_kernels(get("kernels"))
    if get("embedding_init") is not None:
        rc.model.embedding_init = get("embedding_init")
    if get("class_weights") is not None:
        rc.model.class_weights = get("class_weights")
    if get("epochs") is not None:
        rc.model.max_epochs = int(get("epochs"))
    if get("sigma") is not None:
        rc.eval.sigma = float(get("sigma"))
    if get("reps") is not None:
        rc.bench.reps = int(get("reps"))
    if get("warmup") is not None:
        rc.bench.warmup = int(get("warmup"))
    validate(rc)
    return rc
