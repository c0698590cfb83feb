"""Line-oriented run configuration: `key = value` files, environment
overrides, and documented defaults.

Precedence, highest first: command-line flags, environment variables
(POLYAED_<KEY>), the config file, then the defaults below. Unknown keys are
rejected rather than ignored so typos cannot silently change a run.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .datasets import CorpusSpec
from .features import FeatureConfig
from .labelspace import DEFAULT_CATEGORIES, equal_split
from .model import ModelConfig
from .training import TrainConfig

ENV_PREFIX = "POLYAED_"


class ConfigError(ValueError):
    """A configuration problem the operator must fix (usage error)."""


@dataclass(frozen=True)
class RunConfig:
    # run
    seed: int = 42
    precision: str = "fast"
    # labels and model
    categories: int = 16
    model: str = "multitask"
    tasks: int = 8
    decomposition: str = "auto-equal"
    threshold: float = 0.5
    filters: tuple[int, ...] = (64, 64, 128, 128, 256)
    gru_hidden: int = 256
    fc_units: int = 512
    dropout: float = 0.25
    # features
    mel_bins: int = 64
    segment_frames: int = 128
    # training
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 10
    max_steps: int = 0
    # corpus generation
    train_recordings: int = 60
    val_recordings: int = 20
    test_recordings: int = 20
    duration_s: float = 30.0
    events_per_recording: int = 12
    max_polyphony: int = 6


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple[int, ...]":
            return tuple(int(v.strip()) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"config key {key!r} expects a {kind}, got {raw!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw.strip())
    return values


def load_run_config(path=None, env=None, overrides=None) -> RunConfig:
    """Merge defaults <- file <- environment <- explicit flag overrides."""
    cfg = RunConfig()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} does not exist")
        with open(path, "r", encoding="utf-8") as fh:
            cfg = replace(cfg, **parse_config_text(fh.read(), str(path)))
    env = os.environ if env is None else env
    env_values = {}
    for key in _FIELDS:
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            env_values[key] = _parse_value(key, raw)
    cfg = replace(cfg, **env_values)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig):
    if cfg.model not in ("multitask", "baseline"):
        raise ConfigError(f"model must be multitask or baseline, got {cfg.model!r}")
    if cfg.precision not in ("fast", "high"):
        raise ConfigError(f"precision must be fast or high, got {cfg.precision!r}")
    if not 1 <= cfg.categories <= len(DEFAULT_CATEGORIES):
        raise ConfigError(
            f"categories must be in [1, {len(DEFAULT_CATEGORIES)}], got {cfg.categories}"
        )
    if cfg.threshold <= 0.0 or cfg.threshold >= 1.0:
        raise ConfigError(f"threshold must be inside (0, 1), got {cfg.threshold}")


def resolved_text(cfg: RunConfig) -> str:
    """Canonical echo of every key, for artifact directories and exact replay."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def category_names(cfg: RunConfig) -> tuple[str, ...]:
    return DEFAULT_CATEGORIES[: cfg.categories]


def resolve_groups(cfg: RunConfig, categories: tuple[str, ...]):
    """Task groups as index tuples, from auto-equal or an explicit listing."""
    if cfg.model == "baseline":
        return None
    if cfg.decomposition.strip() == "auto-equal":
        try:
            return equal_split(len(categories), cfg.tasks).groups
        except ValueError as err:
            raise ConfigError(str(err)) from None
    from .checkpoint import groups_from_text

    try:
        groups = groups_from_text(cfg.decomposition, categories)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    covered = sorted(i for g in groups for i in g)
    if covered != list(range(len(categories))):
        raise ConfigError(
            "explicit decomposition must cover every category exactly once"
        )
    return groups


def model_config(cfg: RunConfig, categories: tuple[str, ...]) -> ModelConfig:
    try:
        return ModelConfig(
            kind=cfg.model,
            categories=tuple(categories),
            groups=resolve_groups(cfg, tuple(categories)),
            filters=cfg.filters,
            mel_bins=cfg.mel_bins,
            gru_hidden=cfg.gru_hidden,
            fc_units=cfg.fc_units,
            dropout=cfg.dropout,
            precision=cfg.precision,
            threshold=cfg.threshold,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


def corpus_spec(cfg: RunConfig) -> CorpusSpec:
    try:
        return CorpusSpec(
            seed=cfg.seed,
            categories=category_names(cfg),
            train_recordings=cfg.train_recordings,
            val_recordings=cfg.val_recordings,
            test_recordings=cfg.test_recordings,
            duration_s=cfg.duration_s,
            events_per_recording=cfg.events_per_recording,
            max_polyphony=cfg.max_polyphony,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


def feature_config(cfg: RunConfig) -> FeatureConfig:
    return FeatureConfig(mel_bins=cfg.mel_bins, segment_frames=cfg.segment_frames)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        lr=cfg.lr, batch=cfg.batch, epochs=cfg.epochs, seed=cfg.seed, max_steps=cfg.max_steps
    )
