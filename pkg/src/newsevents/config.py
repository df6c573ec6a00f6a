"""Flat ``key = value`` pipeline configuration."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .evaluate import MU_GRID


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class PipelineConfig:
    # paths
    corpus: str = "corpus.tsv"
    lexicon: str = "lexicon.tsv"
    events: str = "events.csv"
    model_dir: str = "model"
    out_dir: str = "out"
    # embedding
    dim: int = 600
    context_n: int = 5
    embed_epochs: int = 10
    embed_lr: float = 0.025
    embed_min_lr: float = 0.0001
    min_count: int = 1
    word_only_pass: bool = True
    use_projection: bool = False
    learn_projection: bool = False
    # labeling
    inner_window: tuple[int, int] = (-8, 45)
    outer_window: tuple[int, int] = (-120, 120)
    coverage_pad: int = 120
    # classifier
    hidden: int = 50
    activation: str = "relu"
    output_form: str = "linear"
    clf_lr: float = 0.01
    momentum: float = 0.9
    clf_epochs: int = 100
    batch_size: int = 32
    # evaluation
    mu_grid: tuple[float, ...] = MU_GRID
    folds: int = 5
    reshuffles: int = 5
    strategy: str = "random"
    period_split: bool = False
    # indices and excerpts
    period: str = "month"
    percentile_step: int = 2
    group_mode: str = "normalized"
    infer_samples: int = 100
    infer_steps: int = 50
    infer_lr: float = 0.0
    top_k: int = 10
    # synthetic data
    synth_entities: int = 20
    synth_intensity: float = 0.9
    # run
    seed: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.strategy not in ("random", "entity"):
            raise ConfigError(f"strategy must be 'random' or 'entity', not {self.strategy!r}")
        if self.period not in ("week", "month", "quarter"):
            raise ConfigError(f"period must be week, month or quarter, not {self.period!r}")
        if self.group_mode not in ("literal", "normalized"):
            raise ConfigError(f"group_mode must be literal or normalized, not {self.group_mode!r}")
        if self.percentile_step not in (2, 4):
            raise ConfigError("percentile_step must be 2 or 4")
        for name in ("dim", "context_n", "hidden", "folds", "reshuffles", "infer_samples",
                     "infer_steps", "threads", "top_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def inference_lr(self) -> float:
        # unset means half the training rate
        return self.infer_lr if self.infer_lr > 0 else self.embed_lr / 2

    def canonical(self) -> str:
        """Stable text form; equal configs give equal text."""
        return "".join(f"{f.name} = {_render(getattr(self, f.name))}\n" for f in fields(self))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name: str, text: str) -> Any:
    default = _FIELDS[name].default
    if default is dataclasses.MISSING:
        default = _FIELDS[name].default_factory()
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        kind = type(default[0])
        values = tuple(kind(p) for p in parts)
        if name.endswith("_window") and len(values) != 2:
            raise ValueError("a window needs exactly two bounds")
        if not values:
            raise ValueError("empty list")
        return values
    return text


def parse_config(text: str) -> PipelineConfig:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
    return PipelineConfig(**values)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
