"""Configuration dataclasses and the INI-style run-config file format.

A run config is a flat INI document with sections ``[generator]``,
``[render]``, ``[adaptation]``, ``[encoder]`` and ``[metrics]``. Unknown keys
are rejected; missing keys take the dataclass defaults below.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .util import json_digest


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration input."""


ADAPTATION_MODES = ("progressive", "trid_only", "g2_only", "joint")
ADAPTATION_TASKS = ("one_shot", "zero_shot")
ENCODER_KINDS = ("stub", "external")


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture sizes for the tri-plane generator.

    Desk-scale defaults keep every golden value reproducible on a laptop;
    all sizes are config keys so larger plug-in weights remain loadable.
    """

    d_z: int = 64
    d_w: int = 64
    plane_resolution: int = 32       # H_f
    plane_channels: int = 8          # M_f per plane
    render_resolution: int = 32      # feature image side
    render_channels: int = 32        # feature image channels
    decoder_hidden: int = 64
    synthesis_channels: int = 64     # width of the plane-synthesis trunk
    init_seed: int = 0
    init_scale: float = 0.02

    def __post_init__(self) -> None:
        if self.d_z < 1 or self.d_w < 1:
            raise ConfigError("latent and style dimensions must be positive")
        if self.plane_resolution % 4 != 0:
            raise ConfigError("plane_resolution must be divisible by 4 (two x2 synthesis stages)")
        if self.plane_channels < 1 or self.render_channels < 1:
            raise ConfigError("channel counts must be positive")

    @property
    def output_resolution(self) -> int:
        """Final RGB side length: two x2 super-resolution stages."""
        return self.render_resolution * 4

    def digest(self) -> str:
        """Architecture digest; excludes init_seed/init_scale, which do not
        affect compatibility once a checkpoint overwrites the parameters."""
        payload = {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name not in ("init_seed", "init_scale")
        }
        return json_digest(payload)


@dataclass(frozen=True)
class RenderConfig:
    """Quadrature settings for volume rendering."""

    n_samples: int = 48
    t_near: float = 2.0
    t_far: float = 4.0
    stratified: bool = False

    def __post_init__(self) -> None:
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if not (0.0 < self.t_near < self.t_far):
            raise ConfigError("require 0 < t_near < t_far")


#: Per-ray sample count used by evaluation paths (metrics, CLI rendering).
EVAL_SAMPLES = 128


def eval_render_config(base: RenderConfig | None = None) -> RenderConfig:
    """The evaluation-quality variant of a (training) render config."""
    base = base or RenderConfig()
    return dataclasses.replace(base, n_samples=EVAL_SAMPLES, stratified=False)


@dataclass(frozen=True)
class AdaptationConfig:
    """Weights, schedule and optimizer constants for adaptation runs."""

    lambda_dir: float = 1.0
    lambda_dis: float = 2.0
    lambda_istr: float = 3.0
    lambda_fstr: float = 5.0
    iters_step1: int = 600
    iters_step2: int = 1200
    learning_rate: float = 0.0025
    batch_size: int = 16
    token_layer: int = 3
    t_channels: int = 20
    mode: str = "progressive"
    task: str = "one_shot"
    seed: int = 0
    source_embed_samples: int = 5000
    source_embed_batch: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    yaw_range: float = 0.6
    pitch_range: float = 0.3

    def __post_init__(self) -> None:
        for name in ("lambda_dir", "lambda_dis", "lambda_istr", "lambda_fstr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.iters_step1 < 0 or self.iters_step2 < 0:
            raise ConfigError("iteration counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.t_channels < 1:
            raise ConfigError("t_channels must be >= 1")
        if self.mode not in ADAPTATION_MODES:
            raise ConfigError(f"mode must be one of {ADAPTATION_MODES}, got {self.mode!r}")
        if self.task not in ADAPTATION_TASKS:
            raise ConfigError(f"task must be one of {ADAPTATION_TASKS}, got {self.task!r}")


def ablation_table_preset(**overrides: Any) -> AdaptationConfig:
    """Alternative weighting (2, 1, 3, 5) used by one published ablation grid."""
    base = dict(lambda_dir=2.0, lambda_dis=1.0, lambda_istr=3.0, lambda_fstr=5.0)
    base.update(overrides)
    return AdaptationConfig(**base)


@dataclass(frozen=True)
class EncoderSpec:
    """Which encoder backs embeddings and token sequences."""

    kind: str = "stub"
    token_layer: int = 3
    token_dim: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"encoder kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        if self.token_layer < 1:
            raise ConfigError("token_layer must be >= 1")


@dataclass(frozen=True)
class MetricsConfig:
    """Sample counts for the evaluation metrics."""

    n_samples: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs, parsed from one INI document."""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)


_SECTIONS = {
    "generator": GeneratorConfig,
    "render": RenderConfig,
    "adaptation": AdaptationConfig,
    "encoder": EncoderSpec,
    "metrics": MetricsConfig,
}


def _coerce(raw: str, annotation: Any, key: str) -> Any:
    if annotation is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from exc
    if annotation is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected number, got {raw!r}") from exc
    if annotation is bool:
        low = raw.strip().lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}")
    return raw


def load_run_config(path: str | Path) -> RunConfig:
    """Parse an INI run config, rejecting unknown sections or keys."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    kwargs: dict[str, Any] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        cls = _SECTIONS[section]
        allowed = {f.name: f.type for f in fields(cls)}
        values: dict[str, Any] = {}
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            annotation = {"int": int, "float": float, "bool": bool, "str": str}.get(
                str(allowed[key]), allowed[key]
            )
            values[key] = _coerce(raw, annotation, f"[{section}] {key}")
        kwargs[section] = cls(**values)
    return RunConfig(**kwargs)


def dump_run_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the fully resolved config as an INI document."""
    lines: list[str] = []
    for section, value in (
        ("generator", cfg.generator),
        ("render", cfg.render),
        ("adaptation", cfg.adaptation),
        ("encoder", cfg.encoder),
        ("metrics", cfg.metrics),
    ):
        lines.append(f"[{section}]")
        for f in fields(value):
            lines.append(f"{f.name} = {getattr(value, f.name)}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
