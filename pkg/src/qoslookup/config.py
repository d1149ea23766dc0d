"""Simulation configuration and its flat key/value file format (YAML)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import yaml

from .cost import CostModel, CostWeights, QosConstraints
from .errors import ConfigError, DomainError
from .protocol import Strategy


@dataclass(frozen=True)
class SimConfig:
    # defaults reproduce the 1000-node evaluation profile
    node_count: int = 1000
    object_count: int = 50
    max_objects_per_peer: int = 15
    deg_min: int = 3
    deg_avg: float = 6.0
    deg_max: int = 12
    max_bw: float = 10.0
    max_ll: float = 100.0
    max_files: int = 50
    ttl: int = 5
    queries_per_run: int = 100
    strategy: str = "qos"
    w_bandwidth: float = 0.65
    w_latency: float = 0.20
    w_past: float = 0.15
    min_bandwidth: float = 2.0
    max_latency: float = 20.0
    leave_rate: float = 0.0
    join_rate: float = 0.0
    probe_period: int = 1
    probe_noise: float = 0.0
    seed: int = 1

    def validate(self) -> "SimConfig":
        for name in ("node_count", "object_count", "max_files", "ttl", "probe_period"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_objects_per_peer < 0 or self.queries_per_run < 0:
            raise ConfigError("max_objects_per_peer and queries_per_run must be >= 0")
        if self.max_bw <= 0 or self.max_ll <= 0:
            raise ConfigError("max_bw and max_ll must be positive")
        if not 0 < self.min_bandwidth <= self.max_bw:
            raise ConfigError("min_bandwidth must lie in (0, max_bw]")
        if not 0 < self.max_latency <= self.max_ll:
            raise ConfigError("max_latency must lie in (0, max_ll]")
        if self.leave_rate < 0 or self.join_rate < 0 or self.probe_noise < 0:
            raise ConfigError("churn rates and probe_noise must be >= 0")
        try:
            Strategy.parse(self.strategy)
            self.weights()
        except (ValueError, DomainError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    @property
    def strategy_enum(self) -> Strategy:
        return Strategy.parse(self.strategy)

    def weights(self) -> CostWeights:
        return CostWeights(self.w_bandwidth, self.w_latency, self.w_past)

    def cost_model(self) -> CostModel:
        return CostModel(self.max_bw, self.max_ll, self.max_files, self.weights())

    def constraints(self) -> QosConstraints:
        return self.cost_model().constraints(self.min_bandwidth, self.max_latency)

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def config_from_mapping(data: Mapping[str, Any], base: SimConfig = SimConfig()) -> SimConfig:
    known = {f.name: f for f in fields(SimConfig)}
    changes = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, (dict, list)):
            raise ConfigError(f"config key {key!r} must be a scalar")
        default = getattr(base, key)
        try:
            if isinstance(default, bool) or isinstance(default, str):
                value = str(value)
            elif isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(value)
                value = int(value)
            elif isinstance(default, float):
                value = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        changes[key] = value
    return dataclasses.replace(base, **changes).validate()


def load_config(path: Union[str, Path]) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat key/value mapping")
    return config_from_mapping(data)
