"""Pipeline configuration: INI-style ``key = value`` file with sections.

Relative paths are resolved against the directory holding the config file.
See ``configs/pipeline.ini`` in the repository for every key.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .augment import AugmentStrategy
from .corpus import SplitSpec
from .errors import ConfigError
from .model import EncoderConfig, MEAN_LAST_TWO
from .rng import derive_seed
from .train import TrainConfig


@dataclass(frozen=True)
class Paths:
    dataset: Optional[Path] = None
    vocab: Optional[Path] = None
    merges: Optional[Path] = None
    checkpoint: Optional[Path] = None
    qrels: Optional[Path] = None
    cache: Optional[Path] = None
    translations: Optional[Path] = None
    output_dir: Path = Path("out")


@dataclass(frozen=True)
class TokenizerSettings:
    scheme: str = "wordpiece"
    lowercase: bool = False
    byte_level: bool = False
    max_word_chars: int = 100


@dataclass(frozen=True)
class EncoderSettings:
    num_layers: int = 2
    hidden_dim: int = 32
    num_heads: int = 2
    ff_dim: int = 0
    max_seq_len: int = 64
    dropout_p: float = 0.1
    head_variant: str = MEAN_LAST_TWO
    head_dropout_p: Optional[float] = None

    def build(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(vocab_size=vocab_size, **self.__dict__)


@dataclass(frozen=True)
class AugmentSettings:
    enabled: bool = False
    strategy: AugmentStrategy = field(default_factory=AugmentStrategy)
    allow_leakage: bool = False
    provider: str = "mock"  # mock | http
    endpoint: Optional[str] = None
    credential_env: Optional[str] = None
    language_map: dict = field(default_factory=dict)
    max_workers: int = 1
    retries: int = 2


@dataclass(frozen=True)
class SplitSettings:
    fractions: tuple = (("train", 0.7), ("val", 0.2), ("test", 0.1))
    stratified: bool = True
    train_split: str = "train"
    val_split: str = "val"
    eval_split: Optional[str] = "test"


@dataclass(frozen=True)
class PipelineConfig:
    run_id: str = "run"
    seed: int = 0
    paths: Paths = field(default_factory=Paths)
    tokenizer: TokenizerSettings = field(default_factory=TokenizerSettings)
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentSettings = field(default_factory=AugmentSettings)
    split: SplitSettings = field(default_factory=SplitSettings)

    def __post_init__(self):
        if not self.run_id or any(c.isspace() for c in self.run_id):
            raise ConfigError(f"run_id must be non-empty without whitespace, got {self.run_id!r}")

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=self.train_seed_for(seed)))

    @staticmethod
    def train_seed_for(seed):
        return derive_seed(seed, 3)

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.split.fractions, seed=derive_seed(self.seed, 1),
                         stratified=self.split.stratified)

    @property
    def init_seed(self) -> int:
        return derive_seed(self.seed, 2)


def _bool(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _fractions(raw):
    out = []
    for item in raw.split(","):
        name, _, frac = item.strip().partition(":")
        if not frac:
            raise ConfigError(f"split fraction {item!r} is not name:fraction")
        out.append((name.strip(), float(frac)))
    return tuple(out)


def _mapping(raw):
    out = {}
    for item in filter(None, (s.strip() for s in raw.split(","))):
        k, _, v = item.partition(":")
        out[k.strip()] = v.strip()
    return out


def _apply(section, items, base, converters=None):
    """Cast ``items`` by the type of each field's default and replace them on ``base``."""
    converters = converters or {}
    kwargs = {}
    for key, raw in items.items():
        try:
            if key in converters:
                kwargs[key] = converters[key](raw)
                continue
            if key not in base.__dataclass_fields__:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            current = getattr(base, key)
            if isinstance(current, bool):
                kwargs[key] = _bool(raw)
            elif isinstance(current, int):
                kwargs[key] = int(raw)
            elif isinstance(current, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw.strip() or None
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return replace(base, **kwargs)


def _section(parser, name, base, converters=None):
    if not parser.has_section(name):
        return base
    return _apply(name, dict(parser.items(name)), base, converters)


def _optional_float(raw):
    return None if raw.strip().lower() in ("", "none") else float(raw)


def _optional_str(raw):
    return None if raw.strip().lower() in ("", "none") else raw.strip()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(path, encoding="utf-8")
    unknown = set(parser.sections()) - {"run", "paths", "tokenizer", "encoder", "train", "augment", "split"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    root = path.parent

    run = dict(parser.items("run")) if parser.has_section("run") else {}
    seed = int(run.get("seed", 0))
    run_id = run.get("run_id", "run")

    kw = {"output_dir": root / "out"}
    if parser.has_section("paths"):
        for key, raw in parser.items("paths"):
            if key not in Paths.__dataclass_fields__:
                raise ConfigError(f"[paths] unknown key {key!r}")
            p = Path(raw.strip())
            kw[key] = p if p.is_absolute() else root / p
    paths = Paths(**kw)

    tok = _section(parser, "tokenizer", TokenizerSettings())
    enc = _section(parser, "encoder", EncoderSettings(), {"head_dropout_p": _optional_float})
    train = _section(parser, "train", TrainConfig())
    split = _section(parser, "split", SplitSettings(),
                     {"fractions": _fractions, "eval_split": _optional_str})

    aug = AugmentSettings()
    if parser.has_section("augment"):
        a = dict(parser.items("augment"))
        strategy = AugmentStrategy(a.pop("strategy", "back_translate"), a.pop("source", "ar"),
                                   a.pop("pivot", "en"))
        aug = _apply("augment", a, aug, {"language_map": _mapping})
        aug = replace(aug, strategy=strategy)
    cfg = PipelineConfig(run_id=run_id, seed=seed, paths=paths, tokenizer=tok, encoder=enc,
                         train=train, augment=aug, split=split)
    # an explicit [train] seed wins over the one derived from [run] seed
    if not parser.has_option("train", "seed"):
        cfg = cfg.with_seed(seed)
    return cfg


def dump_config(cfg: PipelineConfig, relative_to: Optional[Path] = None) -> str:
    """Render a config back to the INI form (used to ship example configs)."""
    def rel(p):
        if p is None:
            return None
        if relative_to is not None:
            try:
                return str(Path(p).relative_to(relative_to))
            except ValueError:
                pass
        return str(p)

    lines = ["[run]", f"run_id = {cfg.run_id}", f"seed = {cfg.seed}", "", "[paths]"]
    for key in Paths.__dataclass_fields__:
        val = rel(getattr(cfg.paths, key))
        if val is not None:
            lines.append(f"{key} = {val}")
    lines += ["", "[tokenizer]"]
    lines += [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in cfg.tokenizer.__dict__.items()]
    lines += ["", "[encoder]"]
    lines += [f"{k} = {'none' if v is None else v}" for k, v in cfg.encoder.__dict__.items()]
    lines += ["", "[train]"]
    lines += [f"{k} = {v}" for k, v in cfg.train.__dict__.items() if k != "seed"]
    lines += ["", "[split]",
              "fractions = " + ", ".join(f"{n}:{f}" for n, f in cfg.split.fractions),
              f"stratified = {str(cfg.split.stratified).lower()}",
              f"train_split = {cfg.split.train_split}",
              f"val_split = {cfg.split.val_split}",
              f"eval_split = {cfg.split.eval_split or 'none'}",
              "", "[augment]",
              f"enabled = {str(cfg.augment.enabled).lower()}",
              f"strategy = {cfg.augment.strategy.kind.value}",
              f"source = {cfg.augment.strategy.source}",
              f"pivot = {cfg.augment.strategy.pivot}",
              f"allow_leakage = {str(cfg.augment.allow_leakage).lower()}",
              f"provider = {cfg.augment.provider}",
              f"max_workers = {cfg.augment.max_workers}",
              f"retries = {cfg.augment.retries}"]
    if cfg.augment.endpoint:
        lines.append(f"endpoint = {cfg.augment.endpoint}")
    if cfg.augment.credential_env:
        lines.append(f"credential_env = {cfg.augment.credential_env}")
    if cfg.augment.language_map:
        lines.append("language_map = " + ", ".join(f"{k}:{v}" for k, v in cfg.augment.language_map.items()))
    return "\n".join(lines) + "\n"
