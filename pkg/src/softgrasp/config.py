"""JSON configuration tree covering every tunable parameter.

The tree mirrors the scenario dataclass plus one block per pipeline stage
(tendon search, landing sampling, surrogate training, landing search,
collision setup).  ``parse_config`` fills defaults for missing keys,
rejects unknown keys, and names the offending dotted key on any schema
violation; ``serialize_config`` emits deterministic JSON so identical
configurations produce identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field

import numpy as np

from softgrasp.control import ControllerGains
from softgrasp.errors import ConfigError
from softgrasp.harness import Scenario
from softgrasp.landing import SPEED_RANGE, TILT_RANGE
from softgrasp.rigid import RigidParams
from softgrasp.softbody.mesh import MaterialParams, TendonLengths

__all__ = [
    "SCHEMA_VERSION",
    "Config",
    "ScheduleConfig",
    "GripSearch",
    "LandingSampling",
    "SurrogateTraining",
    "LandingSearch",
    "CollisionSetup",
    "parse_config",
    "serialize_config",
    "config_to_dict",
    "config_from_dict",
]

SCHEMA_VERSION = 1


@dataclass
class ScheduleConfig:
    """Tendon keyframe lengths [m]; phase times come from the scenario."""

    opened: np.ndarray = field(
        default_factory=lambda: np.array([0.21, 0.21, 0.19, 0.19]))
    closed: np.ndarray = field(
        default_factory=lambda: np.array([0.15, 0.15, 0.21, 0.21]))

    def __post_init__(self):
        self.opened = np.asarray(self.opened, dtype=float)
        self.closed = np.asarray(self.closed, dtype=float)
        for name in ("opened", "closed"):
            if getattr(self, name).shape != (4,):
                raise ConfigError(f"schedule.{name} must hold 4 lengths")


@dataclass
class GripSearch:
    """Projected-gradient settings for the tendon length solves."""

    target_offset: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, -0.05]))
    rate_approach: float = 2.5
    rate_grasp: float = 0.25
    max_iters: int = 100

    def __post_init__(self):
        self.target_offset = np.asarray(self.target_offset, dtype=float)
        if self.target_offset.shape != (3,):
            raise ConfigError("grip.target_offset must be a 3-vector")


@dataclass
class LandingSampling:
    """Dataset generation ranges and episode settings."""

    n_samples: int = 500
    seed: int = 0
    dt: float = 1e-4
    solve_iters: int = 60
    speed_range: np.ndarray = field(
        default_factory=lambda: np.array(SPEED_RANGE))
    tilt_range: np.ndarray = field(
        default_factory=lambda: np.array(TILT_RANGE))
    lateral_range: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0]))

    def __post_init__(self):
        for name in ("speed_range", "tilt_range", "lateral_range"):
            rng = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, rng)
            if rng.shape != (2,) or rng[0] > rng[1]:
                raise ConfigError(
                    f"landing.{name} must be [low, high] with low <= high")


@dataclass
class SurrogateTraining:
    """MLP architecture and training settings."""

    hidden: tuple = (64, 64, 64)
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    holdout_fraction: float = 0.2
    activation: str = "tanh"
    train_seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.train_seeds = tuple(int(s) for s in self.train_seeds)
        if not self.train_seeds:
            raise ConfigError("surrogate.train_seeds must not be empty")


@dataclass
class LandingSearch:
    """Projected-gradient settings for descending the trained surrogate."""

    rate: float = 1e-6
    steps: int = 500
    lower: float = 0.14
    upper: float = 0.26
    warm_start: bool = True

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ConfigError(
                f"search bounds must satisfy lower < upper, "
                f"got [{self.lower}, {self.upper}]")


@dataclass
class CollisionSetup:
    """Collision kinematics optimized by the landing search."""

    vertical_speed: float = -1.5
    lateral_speed: float = 0.0
    tilt: float = 0.1
    lengths: np.ndarray = field(
        default_factory=lambda: TendonLengths().lengths.copy())

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        if self.lengths.shape != (4,):
            raise ConfigError("collision.lengths must hold 4 lengths")


@dataclass
class Config:
    """Root of the configuration tree (schema version 1)."""

    schema_version: int = SCHEMA_VERSION
    scenario: Scenario = field(default_factory=Scenario)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    grip: GripSearch = field(default_factory=GripSearch)
    landing: LandingSampling = field(default_factory=LandingSampling)
    surrogate: SurrogateTraining = field(default_factory=SurrogateTraining)
    search: LandingSearch = field(default_factory=LandingSearch)
    collision: CollisionSetup = field(default_factory=CollisionSetup)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}; "
                f"this build reads version {SCHEMA_VERSION}")
        # the same scalar rules apply whether the config came from a file
        # or was constructed in code
        _check_rules(config_to_dict(self))


def _positive(v) -> bool:
    return v > 0


def _nonnegative(v) -> bool:
    return v >= 0


#: Scalar schema rules applied to the parsed tree, keyed by dotted path.
_RULES = {
    "scenario.gains.k_p": (_positive, "> 0"),
    "scenario.gains.k_v": (_positive, "> 0"),
    "scenario.gains.k_r": (_positive, "> 0"),
    "scenario.gains.k_omega": (_positive, "> 0"),
    "scenario.gains.gamma_f": (_positive, "> 0"),
    "scenario.gains.gamma_tau": (_positive, "> 0"),
    "scenario.gains.k_af": (_positive, "> 0"),
    "scenario.gains.k_atau": (_positive, "> 0"),
    "scenario.gains.beta": (_positive, "> 0"),
    "scenario.rigid.mass": (_positive, "> 0"),
    "scenario.rigid.drag_coeff": (_nonnegative, ">= 0"),
    "grip.rate_approach": (_positive, "> 0"),
    "grip.rate_grasp": (_positive, "> 0"),
    "grip.max_iters": (_positive, "> 0"),
    "landing.n_samples": (_positive, "> 0"),
    "landing.seed": (_nonnegative, ">= 0"),
    "landing.dt": (_positive, "> 0"),
    "landing.solve_iters": (_positive, "> 0"),
    "surrogate.epochs": (_positive, "> 0"),
    "surrogate.batch_size": (_positive, "> 0"),
    "surrogate.learning_rate": (_positive, "> 0"),
    "search.rate": (_positive, "> 0"),
    "search.steps": (_positive, "> 0"),
    "collision.vertical_speed": (lambda v: v < 0, "< 0 (downward)"),
}


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce_scalar(value, tp, path: str):
    """Check/convert one JSON scalar against the annotated field type."""
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{path}' must be a number, "
                              f"got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{path}' must be an integer, "
                              f"got {value!r}")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{path}' must be a boolean, "
                              f"got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key '{path}' must be a string, "
                              f"got {value!r}")
        return value
    raise ConfigError(f"config key '{path}' has unsupported type "
                      f"{_type_name(tp)}")


def _coerce(value, tp, path: str):
    """Convert a parsed JSON value to the annotated field type."""
    origin = typing.get_origin(tp)
    if origin is typing.Union or str(origin) == "<class 'types.UnionType'>":
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"config key '{path}' must be an object "
                              f"of {_type_name(tp)} fields, got {value!r}")
        return _build(tp, value, path)
    if tp is np.ndarray:
        if not isinstance(value, list):
            raise ConfigError(f"config key '{path}' must be a list of "
                              f"numbers, got {value!r}")
        try:
            return np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"config key '{path}' must be a list of "
                              f"numbers, got {value!r}") from None
    if tp is tuple or origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"config key '{path}' must be a list, "
                              f"got {value!r}")
        return tuple(value)
    return _coerce_scalar(value, tp, path)


def _build(cls, data: dict, path: str = ""):
    """Construct a dataclass from a nested dict, rejecting unknown keys."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown config key '{dotted}'")
        kwargs[key] = _coerce(value, hints[key], dotted)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        where = f" (in '{path}')" if path else ""
        raise ConfigError(f"{exc}{where}") from None


def _check_rules(tree: dict) -> None:
    for dotted, (pred, requirement) in _RULES.items():
        node = tree
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                node = None
                break
            node = node[part]
        if node is not None and not pred(node):
            raise ConfigError(
                f"config key '{dotted}' must be {requirement}, got {node}")


def config_from_dict(data: dict) -> Config:
    """Validated config from a parsed JSON object; defaults fill gaps."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    config = _build(Config, data)
    _check_rules(config_to_dict(config))
    return config


def _to_tree(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_tree(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, np.ndarray):
        return [_to_tree(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_to_tree(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def config_to_dict(config: Config) -> dict:
    """JSON-ready nested dict with every field spelled out."""
    return _to_tree(config)


def serialize_config(config: Config) -> str:
    """Deterministic JSON text: sorted keys, two-space indent."""
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"


def parse_config(path) -> Config:
    """Read and validate a JSON config file."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: "
                              f"{exc}") from None
    return config_from_dict(data)
