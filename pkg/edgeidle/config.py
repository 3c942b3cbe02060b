from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml
from loguru import logger

import edgeidle.settings as settings
from edgeidle.core import DEFAULT_CLASSES, ClassLabel, ClassRegistry
from edgeidle.errors import ConfigError, SchemaVersionError, ValidationError
from edgeidle.idle import MadVariant
from edgeidle.tracker import TrackerConfig

CONFIG_SCHEMA_VERSION = 1
ALIGNMENT_MODES = ("exact", "span")


@dataclass
class IdleConfig:
    capacity: int = 15
    fps: float = 10.0
    model: Path | None = None
    mad_variant: MadVariant | None = None
    max_gap: int = 30

    def validate(self, prefix: str = "idle") -> IdleConfig:
        if int(self.capacity) != self.capacity or self.capacity < 2:
            raise ConfigError(f"{prefix}.capacity", "must be an integer >= 2")
        if not self.fps > 0:
            raise ConfigError(f"{prefix}.fps", "must be positive")
        if self.max_gap < 1:
            raise ConfigError(f"{prefix}.max_gap", "must be >= 1")
        return self

    @property
    def window_seconds(self) -> float:
        return self.capacity / self.fps


@dataclass
class EvaluationConfig:
    iou_match: float = 0.5
    detection_iou: float = 0.5
    eps_v: float = 0.5
    alignment: str = "exact"

    def validate(self, prefix: str = "evaluation") -> EvaluationConfig:
        for name in ("iou_match", "detection_iou"):
            if not (0.0 < getattr(self, name) <= 1.0):
                raise ConfigError(f"{prefix}.{name}", "must be in (0, 1]")
        if not self.eps_v > 0:
            raise ConfigError(f"{prefix}.eps_v", "must be positive")
        if self.alignment not in ALIGNMENT_MODES:
            raise ConfigError(f"{prefix}.alignment", f"must be one of {', '.join(ALIGNMENT_MODES)}")
        return self


@dataclass
class PipelineConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    idle: IdleConfig = field(default_factory=IdleConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    classes: tuple[ClassLabel, ...] = DEFAULT_CLASSES
    scenario: Path | None = None
    # None leaves each scenario on its own seed
    seed: int | None = None

    def registry(self) -> ClassRegistry:
        return ClassRegistry(self.classes)

    def validate(self) -> PipelineConfig:
        self.tracker.validate()
        self.idle.validate()
        self.evaluation.validate()
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        return self


def _section(cls, raw, prefix: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(prefix, "must be a mapping")
    names = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
    kwargs = {}
    defaults = cls()
    for key, value in raw.items():
        default = getattr(defaults, key)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{prefix}.{key}", "must be true or false")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{prefix}.{key}", "must be a number")
            if isinstance(default, int) and not isinstance(value, int):
                raise ConfigError(f"{prefix}.{key}", "must be an integer")
        kwargs[key] = value
    return cls(**kwargs)


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def _classes(raw) -> tuple[ClassLabel, ...]:
    if raw is None:
        return DEFAULT_CLASSES
    if not isinstance(raw, list) or not raw:
        raise ConfigError("classes", "must be a non-empty list")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "id" not in item or "name" not in item:
            raise ConfigError(f"classes[{i}]", "needs id and name")
        try:
            out.append(ClassLabel(int(item["id"]), str(item["name"])))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"classes[{i}]", str(e)) from None
    try:
        ClassRegistry(out)
    except ValidationError as e:
        raise ConfigError("classes", str(e)) from None
    return tuple(out)


def config_from_document(doc: dict, base: Path = Path(".")) -> PipelineConfig:
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise SchemaVersionError("config", CONFIG_SCHEMA_VERSION, version)
    unknown = set(doc) - {"schema_version", "tracker", "idle", "evaluation", "classes", "scenario", "seed"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")

    idle_raw = dict(doc.get("idle") or {})
    model = idle_raw.pop("model", None)
    variant = idle_raw.pop("mad_variant", None)
    idle = _section(IdleConfig, idle_raw, "idle")
    idle.model = _resolve(base, model)
    if variant is not None:
        try:
            idle.mad_variant = MadVariant(variant)
        except ValueError:
            raise ConfigError(
                "idle.mad_variant", "must be mean_of_deviations (alias as_printed) or median_of_deviations"
            ) from None

    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("seed", "must be an integer")

    return PipelineConfig(
        tracker=_section(TrackerConfig, doc.get("tracker"), "tracker"),
        idle=idle,
        evaluation=_section(EvaluationConfig, doc.get("evaluation"), "evaluation"),
        classes=_classes(doc.get("classes")),
        scenario=_resolve(base, doc.get("scenario")),
        seed=seed,
    ).validate()


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Load the pipeline config; the default path may be absent, an explicit one may not."""
    explicit = path is not None
    path = Path(path) if explicit else settings.CONFIG_PATH
    if not explicit and not path.exists():
        logger.debug("No config at {}, using built-in defaults", path)
        return PipelineConfig().validate()
    with open(path, "r", encoding="utf-8") as f:
        logger.debug("Loading configuration from {}", path)
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(str(path), f"invalid YAML: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(str(path), "document must be a mapping")
    return config_from_document(doc, path.parent)


def with_overrides(
    cfg: PipelineConfig,
    *,
    seed: int | None = None,
    buffer: int | None = None,
    fps: float | None = None,
    model: Path | None = None,
) -> PipelineConfig:
    """Apply flag/environment overrides (None leaves the file value)."""
    idle = replace(
        cfg.idle,
        capacity=buffer if buffer is not None else cfg.idle.capacity,
        fps=fps if fps is not None else cfg.idle.fps,
        model=model if model is not None else cfg.idle.model,
    )
    return replace(cfg, idle=idle, seed=seed if seed is not None else cfg.seed).validate()
