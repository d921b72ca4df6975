"""Run configuration: dataclass sections loaded from TOML with overrides.

Precedence, lowest to highest: dataclass defaults, the config file, command
line flags. Optional numeric settings use the string ``"auto"`` for their
data-driven default since TOML has no null.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("kriging", "hk-gsm", "hk-gsm-noalign")


@dataclass(frozen=True)
class PathsConfig:
    database: str = "db"
    output: str = "out"


@dataclass(frozen=True)
class DatabaseConfig:
    m: int = 6
    seed: int = 0
    distortions: bool = True


@dataclass(frozen=True)
class AlignConfig:
    delta: Any = "auto"
    grid: int = 33


@dataclass(frozen=True)
class PodConfig:
    threshold: float = 0.999
    mean_centered: bool = False


@dataclass(frozen=True)
class SurrogateSection:
    family: str = "gaussian"
    gappy_delta: Any = "auto"
    guard: bool = True
    inherit_theta: bool = False


@dataclass(frozen=True)
class ExperimentSection:
    methods: tuple = METHODS
    sizes: tuple = (5, 7, 10, 15, 20, 30, 40, 50)
    repeats: int = 10
    seed: int = 0
    holdout_seed: int = 0
    validation_size: int = 40


@dataclass(frozen=True)
class AdaptiveSection:
    strategy: str = "discrepancy"
    initial: int = 5
    budget: int = 20
    seed: int = 0
    method: str = "hk-gsm"


@dataclass(frozen=True)
class Config:
    paths: PathsConfig = field(default_factory=PathsConfig)
    database: DatabaseConfig = field(default_factory=DatabaseConfig)
    alignment: AlignConfig = field(default_factory=AlignConfig)
    pod: PodConfig = field(default_factory=PodConfig)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    adaptive: AdaptiveSection = field(default_factory=AdaptiveSection)

    def to_dict(self) -> dict:
        out = asdict(self)
        for sec in out.values():
            for k, v in sec.items():
                if isinstance(v, tuple):
                    sec[k] = list(v)
        return out

    def stage_hash(self, stage: str) -> str:
        """Hash of the sections an artifact of ``stage`` depends on."""
        chain = {
            "database": ["database"],
            "alignment": ["database", "alignment"],
            "pod": ["database", "alignment", "pod"],
            "gsm": ["database", "alignment", "pod", "surrogate"],
            "experiment": ["database", "alignment", "pod", "surrogate", "experiment"],
            "adaptive": ["database", "alignment", "pod", "surrogate", "experiment", "adaptive"],
        }[stage]
        data = self.to_dict()
        blob = json.dumps({k: data[k] for k in chain}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self) -> "Config":
        if self.database.m < 2:
            raise ConfigError("database.m must be at least 2 (alignment needs a reference and one more entry)")
        if not 0.0 < self.pod.threshold <= 1.0:
            raise ConfigError("pod.threshold must lie in (0, 1]")
        if self.alignment.grid < 2 or self.experiment.validation_size < 2:
            raise ConfigError("grid sizes must be at least 2")
        if any(s < 1 for s in self.experiment.sizes) or self.experiment.repeats < 1:
            raise ConfigError("experiment sizes and repeats must be at least 1")
        bad = [m for m in self.experiment.methods if m not in METHODS]
        if bad or self.adaptive.method not in METHODS:
            raise ConfigError(f"unknown method(s) {bad or self.adaptive.method}; choose from {METHODS}")
        if self.adaptive.strategy not in ("mse", "discrepancy"):
            raise ConfigError("adaptive.strategy must be 'mse' or 'discrepancy'")
        if self.adaptive.budget < self.adaptive.initial or self.adaptive.initial < 1:
            raise ConfigError("adaptive.budget must be at least adaptive.initial >= 1")
        for name, v in (("alignment.delta", self.alignment.delta), ("surrogate.gappy_delta", self.surrogate.gappy_delta)):
            if v != "auto" and not (isinstance(v, (int, float)) and v >= 0):
                raise ConfigError(f"{name} must be 'auto' or a nonnegative number")
        return self


def auto(value) -> Optional[float]:
    return None if value == "auto" else float(value)


def _coerce(section, key: str, value):
    types = {f.name: f for f in fields(section)}
    if key not in types:
        raise ConfigError(f"unknown setting {type(section).__name__}.{key}")
    current = getattr(section, key)
    if isinstance(current, tuple):
        return tuple(value) if isinstance(value, (list, tuple)) else tuple(value.split(","))
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int) and not isinstance(value, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if key.endswith("delta") and isinstance(value, str) and value != "auto":
        return float(value)
    return value


def apply(cfg: Config, data: dict) -> Config:
    """Overlay nested ``{section: {key: value}}`` settings onto ``cfg``."""
    sections = {}
    for name, values in data.items():
        if not hasattr(cfg, name):
            raise ConfigError(f"unknown config section [{name}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{name}] must be a table")
        sec = getattr(cfg, name)
        try:
            sections[name] = replace(sec, **{k: _coerce(sec, k, v) for k, v in values.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value in [{name}]: {exc}") from None
    cfg = replace(cfg, **sections)
    if "experiment" in data:
        e = cfg.experiment
        cfg = replace(cfg, experiment=replace(e, sizes=tuple(int(s) for s in e.sizes)))
    return cfg


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> Config:
    cfg = Config()
    if path:
        try:
            with open(path, "rb") as fh:
                cfg = apply(cfg, tomllib.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    if overrides:
        cfg = apply(cfg, overrides)
    return cfg.validate()
