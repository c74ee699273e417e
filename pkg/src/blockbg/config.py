"""Estimator configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .mrf import GibbsParams


@dataclass(frozen=True)
class EstimatorConfig:
    block_size: int = 16
    t1: float = 0.8
    t2: float | None = None  # None: estimate from the input
    fps: float = 25.0
    eta: float = 3.0
    w_max_seconds: float = 5.0
    icm_iterations: int = 5
    temperature_divisor: float = 10.0
    truncation: str = "square"
    parallel: bool = False
    training_frames: int = 100

    def __post_init__(self):
        if self.block_size < 2:
            raise ConfigError("block_size must be at least 2")
        if not 0 < self.t1 <= 1:
            raise ConfigError("t1 must lie in (0, 1]")
        if self.t2 is not None and not self.t2 > 0:
            raise ConfigError("t2 must be positive")
        if not self.fps > 0:
            raise ConfigError("fps must be positive")
        if self.training_frames < 2:
            raise ConfigError("training_frames must be at least 2")
        try:
            self.gibbs()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def gibbs(self) -> GibbsParams:
        return GibbsParams(eta=self.eta, w_max_seconds=self.w_max_seconds,
                           icm_iterations=self.icm_iterations,
                           temperature_divisor=self.temperature_divisor,
                           truncation=self.truncation, parallel=self.parallel)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "EstimatorConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "EstimatorConfig":
        """Build from a mapping whose values may be strings (as read from a file)."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[name] = _convert(name, raw)
        return cls(**kwargs)

    @classmethod
    def coerce(cls, config=None, **overrides) -> "EstimatorConfig":
        if config is None:
            config = cls()
        elif isinstance(config, dict):
            config = cls.from_mapping(config)
        return config.replace(**overrides) if overrides else config


_INTS = {"block_size", "icm_iterations", "training_frames"}
_FLOATS = {"t1", "fps", "eta", "w_max_seconds", "temperature_divisor"}


def _convert(name, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if name in _INTS:
            return int(text)
        if name in _FLOATS:
            return float(text)
        if name == "t2":
            return None if text.lower() in ("", "auto", "none") else float(text)
        if name == "parallel":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {name}") from None
    return text


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config_file(path) -> EstimatorConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    return EstimatorConfig.from_mapping(parse_config_text(text))
