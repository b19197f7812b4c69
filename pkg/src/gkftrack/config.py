"""Run configuration: every tunable grouped by module, loaded from YAML.

Unknown keys are rejected and values are validated at load, so a typo in a
config file fails loudly instead of silently falling back to a default.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .gkf import GainNetConfig
from .metrics import EvalConfig
from .simulator import ConfigError, NoiseSpec, SimConfig
from .tracker import TrackerConfig
from .trainer import TrainConfig

MOTION_MODES = ("EKF", "GRU-KF")


@dataclass
class NetConfig:
    """Gain-network sizes; dimensions follow from the tracker's motion model."""
    hidden_q: int | None = None
    hidden_p: int | None = None
    hidden_s: int | None = None
    bridge_dim: int | None = None
    head_dim: int | None = None
    state_scale: tuple | None = None
    obs_scale: tuple | None = None

    def for_model(self, model) -> GainNetConfig:
        return GainNetConfig(model.state_dim, model.obs_dim, **asdict(self)).resolved()


@dataclass
class RunConfig:
    seed: int = 0
    motion_mode: str = "EKF"
    simulator: SimConfig = field(default_factory=SimConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    network: NetConfig = field(default_factory=NetConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "RunConfig":
        if self.motion_mode not in MOTION_MODES:
            raise ConfigError("motion_mode", f"must be one of {MOTION_MODES}")
        try:
            self.simulator.validate()
        except ConfigError as e:
            raise ConfigError(f"simulator.{e.field}", str(e).split(": ", 1)[1]) from None
        if self.evaluation.dist_gate <= 0 or self.evaluation.n_thresholds < 1:
            raise ConfigError("evaluation", "dist_gate > 0 and n_thresholds >= 1 required")
        for name in ("state_scale", "obs_scale"):
            v = getattr(self.network, name)
            if v is not None and any(s <= 0 for s in v):
                raise ConfigError(f"network.{name}", "scales must be positive")
        return self

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def net_config(self) -> GainNetConfig:
        return self.network.for_model(self.tracker.model())


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _build(cls, data, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "config", "expected a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}", "unknown key")
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        path = f"{prefix}{name}"
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, path + ".")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = _coerce(value, tp, path)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(prefix.rstrip(".") or "config", str(e)) from None


def _coerce(value, tp, path):
    args = set(typing.get_args(tp)) or {tp}
    if value is None:
        if type(None) in args:
            return None
        raise ConfigError(path, "may not be null")
    if float in args and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if int in args and isinstance(value, bool):
        raise ConfigError(path, "expected an integer, got a boolean")
    ok = [t for t in args if isinstance(t, type) and isinstance(value, t)]
    if not ok and not args & {tuple, typing.Any}:
        raise ConfigError(path, f"expected {tp}, got {type(value).__name__}")
    return value


def from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data or {}, "").validate()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("config", f"invalid YAML: {e}") from None
    return from_dict(data or {})


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
