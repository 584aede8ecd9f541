"""
Run configuration: YAML/JSON documents, overrides and the SDD_SEED variable.

Precedence, lowest first: dataclass defaults, config file, `--set`
overrides, SDD_SEED.
"""

from __future__ import annotations

import copy
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .data import SyntheticSpec, preset_spec
from .errors import ConfigError
from .metrics import ALL_METRICS
from .sampler import SampleConfig
from .schedule import NoiseSchedule
from .trainer import TrainConfig
from .validators.config import ConfigValidator

logger = logging.getLogger(__name__)

SEED_ENV = "SDD_SEED"


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [256, 256, 256])
    temb_dim: int = 64
    sparsity_bits: bool = True


@dataclass
class DataConfig:
    path: str | None = None
    preset: str | None = None
    synthetic: dict | None = None
    n: int = 2000
    per_feature: bool = False

    def synthetic_spec(self, seed: int) -> SyntheticSpec | None:
        if self.preset:
            return preset_spec(self.preset, seed=seed, **(self.synthetic or {}))
        if self.synthetic is not None:
            return SyntheticSpec(**{"seed": seed, **self.synthetic})
        return None


@dataclass
class EvalConfig:
    metrics: list[str] = field(default_factory=lambda: list(ALL_METRICS))
    k: int = 30
    bandwidth: float | None = None
    quantize_levels: int | None = None


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    data: DataConfig = field(default_factory=DataConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sample_count: int | None = None

    def to_dict(self) -> dict:
        return {
            "train": self.train.to_dict(),
            "model": asdict(self.model),
            "schedule": self.schedule.to_dict(),
            "data": asdict(self.data),
            "sample": self.sample.to_dict(),
            "eval": asdict(self.eval),
            "sample_count": self.sample_count,
        }


def load_config(config_path: str | Path | None) -> dict:
    """
    Load a configuration document from YAML (JSON is valid YAML).

    Raises:
        ConfigError: if the file is missing, unparsable or not a mapping
    """
    if not config_path:
        return {}

    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {config_path}")

    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"Cannot parse {config_path}: {exc}") from exc

    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path}: top level must be a mapping")
    return raw


def parse_override(item: str) -> tuple[list[str], object]:
    """`train.seed=3` -> (["train", "seed"], 3); values are parsed as YAML scalars."""
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Override must look like section.key=value (got {item!r})")
    try:
        parsed = yaml.safe_load(value) if value.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"Cannot parse override value in {item!r}: {exc}") from exc
    return key.strip().split("."), parsed


def apply_overrides(raw: dict, overrides: list[str] | None) -> dict:
    merged = copy.deepcopy(raw)
    for item in overrides or []:
        keys, value = parse_override(item)
        node = merged
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Override {item!r} descends into non-mapping '{key}'")
            node = child
        node[keys[-1]] = value
    return merged


def seed_from_env() -> int | None:
    value = os.environ.get(SEED_ENV)
    if value is None or value == "":
        return None
    try:
        seed = int(value)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be a non-negative integer (got {value!r})") from exc
    if seed < 0:
        raise ConfigError(f"{SEED_ENV} must be a non-negative integer (got {value!r})")
    return seed


def _known(cls, section: dict | None) -> dict:
    """Keys of `section` that `cls` accepts; the rest were already reported as warnings."""
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in (section or {}).items() if k in names}


def build_run_config(raw: dict) -> RunConfig:
    """
    Validate a raw document and build typed sections.

    SDD_SEED, when set, replaces the train and sample seeds.

    Raises:
        ConfigError: with every validation error joined
    """
    result = ConfigValidator().validate(raw)
    for warning in result.warnings:
        logger.warning("config: %s", warning)
    if not result.passed:
        raise ConfigError("Invalid configuration: " + "; ".join(result.errors))

    schedule_raw = _known(NoiseSchedule, raw.get("schedule"))
    train_raw = _known(TrainConfig, raw.get("train"))
    if "kind" in schedule_raw:
        train_raw["schedule_kind"] = schedule_raw["kind"]

    try:
        cfg = RunConfig(
            train=TrainConfig(**train_raw),
            model=ModelConfig(**_known(ModelConfig, raw.get("model"))),
            schedule=NoiseSchedule(**schedule_raw),
            data=DataConfig(**_known(DataConfig, raw.get("data"))),
            sample=SampleConfig(**_known(SampleConfig, raw.get("sample"))),
            eval=EvalConfig(**_known(EvalConfig, raw.get("eval"))),
            sample_count=(raw.get("sample") or {}).get("n"),
        )
    except TypeError as exc:
        raise ConfigError(f"Invalid configuration: {exc}") from exc

    seed = seed_from_env()
    if seed is not None:
        cfg.train.seed = seed
        cfg.sample.seed = seed
        logger.info("%s overrides seeds with %d", SEED_ENV, seed)
    cfg.train.check()
    return cfg


def resolve(config_path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    return build_run_config(apply_overrides(load_config(config_path), overrides))
