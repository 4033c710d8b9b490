"""Session configuration with nested sections and flat dotted-key access."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigurationError


@dataclass(frozen=True)
class CandidatesConfig:
    overlap_threshold: float = 0.10
    page_size: int = 6
    expansion_count: int = 3
    background_area_fraction: float = 0.8
    background_penalty: float = 0.5


@dataclass(frozen=True)
class CursorConfig:
    offset_px: float = 8.0
    radius_px: int = 7
    band_halfwidth_frac: float = 0.05
    occupancy_threshold: float = 0.6
    required_consecutive: int = 3


@dataclass(frozen=True)
class SessionConfig:
    candidates: CandidatesConfig = field(default_factory=CandidatesConfig)
    cursor: CursorConfig = field(default_factory=CursorConfig)
    history_limit: int = 20
    fps: int = 25
    propagation_mode: str = "oracle"
    event_buffer: int = 256

    def __post_init__(self) -> None:
        if self.propagation_mode not in ("oracle", "drift"):
            raise ConfigurationError(f"propagation_mode must be oracle or drift, got {self.propagation_mode!r}")
        if self.fps < 1:
            raise ConfigurationError("fps must be >= 1")
        if self.event_buffer < 8:
            raise ConfigurationError("event_buffer must be >= 8")

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(data: dict) -> SessionConfig:
    """Build a config from a nested dict and/or flat dotted keys like
    ``candidates.overlap_threshold``."""
    nested: dict = {}
    for key, value in data.items():
        if "." in key:
            section, leaf = key.split(".", 1)
            nested.setdefault(section, {})
            if isinstance(nested[section], dict):
                nested[section][leaf] = value
        elif isinstance(value, dict):
            nested.setdefault(key, {}).update(value)
        else:
            nested[key] = value

    config = SessionConfig()
    known_sections = {"candidates": CandidatesConfig, "cursor": CursorConfig}
    top_fields = {f.name for f in fields(SessionConfig)}
    updates: dict = {}
    for key, value in nested.items():
        if key in known_sections:
            section_cls = known_sections[key]
            valid = {f.name for f in fields(section_cls)}
            unknown = set(value) - valid
            if unknown:
                raise ConfigurationError(f"unknown {key} config keys: {sorted(unknown)}")
            updates[key] = section_cls(**value)
        elif key in top_fields:
            updates[key] = value
        else:
            raise ConfigurationError(f"unknown config key: {key!r}")
    return replace(config, **updates)
