"""Scenario configuration: dataclasses plus strict YAML loading.

Config files are hierarchical YAML with sections model / lipm / mpc / tsc /
scenario / terrain / disturbances / output. Every key has a documented
default; unknown keys are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import yaml

from .errors import ValidationError

WARN_VELOCITY = 0.6   # |command| above this is outside the validated basin


def _check_keys(d: dict, allowed, where: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")


def _from_dict(cls, d: dict, where: str):
    d = d or {}
    names = [f.name for f in fields(cls)]
    _check_keys(d, names, where)
    return cls(**d)


@dataclass(frozen=True)
class LipmSection:
    z0: float = None      # pendulum height; default depends on scenario mode
    g: float = 9.81

    def resolved_z0(self, mode: str) -> float:
        if self.z0 is not None:
            return float(self.z0)
        # whole-body scenarios need a height the legs can actually reach
        return 0.62 if mode == "whole_body" else 0.8


@dataclass(frozen=True)
class MpcSection:
    horizon: int = 4
    step_period: float = 0.5
    q_weights: tuple = (0.0, 10.0, 0.0, 10.0)   # diag of Q over [x, dx, y, dy]
    r_weights: tuple = (1.0, 1.0)               # diag of R
    regularize_first_step: bool = True
    sagittal_bound: float = 0.5
    lateral_inner: float = 0.1
    lateral_outer: float = 0.35
    calls_per_step: int = 1

    def __post_init__(self):
        if self.calls_per_step < 1:
            raise ValidationError("mpc.calls_per_step must be >= 1")
        if len(tuple(self.q_weights)) != 4 or len(tuple(self.r_weights)) != 2:
            raise ValidationError("mpc.q_weights must have 4 entries, r_weights 2")
        object.__setattr__(self, "q_weights", tuple(float(x) for x in self.q_weights))
        object.__setattr__(self, "r_weights", tuple(float(x) for x in self.r_weights))


@dataclass(frozen=True)
class TaskGainSection:
    kp: float = 0.0
    kd: float = 0.0
    weight: float = 1.0


@dataclass(frozen=True)
class TscSection:
    com: TaskGainSection = field(default_factory=lambda: TaskGainSection(100.0, 20.0, 10.0))
    swing_foot: TaskGainSection = field(default_factory=lambda: TaskGainSection(225.0, 30.0, 10.0))
    trunk_pitch: TaskGainSection = field(default_factory=lambda: TaskGainSection(100.0, 20.0, 1.0))
    angular_momentum: TaskGainSection = field(default_factory=lambda: TaskGainSection(0.0, 5.0, 0.5))
    tau_reg: float = 1e-4
    force_reg: float = 1e-6
    friction_mu: float = 0.7
    cop_half_length: float = 0.1   # half the published 0.2 m foot
    cop_margin: float = 0.9        # controller uses cop_margin * cop_half_length

    def __post_init__(self):
        for name in ("com", "swing_foot", "trunk_pitch", "angular_momentum"):
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, _from_dict(TaskGainSection, v, f"tsc.{name}"))
        if not (0.0 < self.cop_margin <= 1.0):
            raise ValidationError("tsc.cop_margin must be in (0, 1]")


@dataclass(frozen=True)
class TerrainSection:
    kind: str = "flat"          # flat | stairs | random
    # stairs
    rise: float = 0.04
    run: float = 0.3
    count: int = 5
    start_x: float = 0.5
    # random
    amplitude: float = 0.04
    cell: float = 0.3

    def __post_init__(self):
        if self.kind not in ("flat", "stairs", "random"):
            raise ValidationError(f"terrain.kind must be flat|stairs|random, got {self.kind!r}")
        if self.cell <= 0 or self.run <= 0:
            raise ValidationError("terrain cell/run must be > 0")


@dataclass(frozen=True)
class Disturbance:
    kind: str                       # push | payload | terrain_step
    force: tuple = (0.0, 0.0)       # push: (fx, fz) N on the trunk
    mass: float = 0.0               # payload: kg added at the trunk com
    start: float = 0.0
    duration: float = 0.0
    body: str = "trunk"
    x: float = 0.0                  # terrain_step: ground raises by height for x >= x
    height: float = 0.0

    def __post_init__(self):
        if self.kind not in ("push", "payload", "terrain_step"):
            raise ValidationError(f"disturbance kind must be push|payload|terrain_step, got {self.kind!r}")
        if self.duration < 0:
            raise ValidationError("disturbance duration must be >= 0")
        if self.kind == "payload" and self.mass < 0:
            raise ValidationError("payload mass must be >= 0")
        if self.kind == "push" and self.body != "trunk":
            raise ValidationError("push disturbances support body=trunk only")
        object.__setattr__(self, "force", tuple(float(x) for x in self.force))

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class OutputSection:
    series_csv: str = None
    events_csv: str = None


@dataclass(frozen=True)
class ScenarioSection:
    mode: str = "whole_body"         # whole_body | lipm
    command_velocity: float = 0.0
    duration: float = 10.0
    seed: int = 0
    swing_apex: float = 0.05
    touchdown_velocity: float = 0.1      # swing descent speed at nominal touchdown
    lateral_half_width: float = 0.1      # lipm mode: stance offset of the gait

    def __post_init__(self):
        if self.mode not in ("whole_body", "lipm"):
            raise ValidationError(f"scenario.mode must be whole_body|lipm, got {self.mode!r}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValidationError("scenario.duration must be > 0")
        if self.swing_apex <= 0:
            raise ValidationError("scenario.swing_apex must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    model: dict = field(default_factory=dict)
    lipm: LipmSection = field(default_factory=LipmSection)
    mpc: MpcSection = field(default_factory=MpcSection)
    tsc: TscSection = field(default_factory=TscSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    terrain: TerrainSection = field(default_factory=TerrainSection)
    disturbances: tuple = ()
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        if abs(self.scenario.command_velocity) > WARN_VELOCITY:
            import warnings
            warnings.warn(
                f"command velocity {self.scenario.command_velocity} m/s is outside the "
                f"validated basin (|v| <= {WARN_VELOCITY})", stacklevel=2)
        if self.scenario.mode == "lipm":
            for d in self.disturbances:
                if d.kind != "push":
                    raise ValidationError(
                        f"lipm mode supports push disturbances only, got {d.kind}")

    def with_scenario(self, **kw) -> "ScenarioConfig":
        return replace(self, scenario=replace(self.scenario, **kw))


_TOP_KEYS = ("model", "lipm", "mpc", "tsc", "scenario", "terrain", "disturbances", "output")


def config_from_dict(raw: dict) -> ScenarioConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a mapping")
    _check_keys(raw, _TOP_KEYS, "config")
    dists = []
    for i, d in enumerate(raw.get("disturbances") or []):
        dists.append(_from_dict(Disturbance, d, f"disturbances[{i}]"))
    return ScenarioConfig(
        model=raw.get("model") or {},
        lipm=_from_dict(LipmSection, raw.get("lipm"), "lipm"),
        mpc=_from_dict(MpcSection, raw.get("mpc"), "mpc"),
        tsc=_from_dict(TscSection, raw.get("tsc"), "tsc"),
        scenario=_from_dict(ScenarioSection, raw.get("scenario"), "scenario"),
        terrain=_from_dict(TerrainSection, raw.get("terrain"), "terrain"),
        disturbances=tuple(dists),
        output=_from_dict(OutputSection, raw.get("output"), "output"),
    )


def load_config(path) -> ScenarioConfig:
    with open(path) as f:
        raw = yaml.safe_load(f)
    return config_from_dict(raw)


def set_by_path(config: ScenarioConfig, dotted: str, value) -> ScenarioConfig:
    """Return a config with one dotted-path field replaced (e.g. 'mpc.horizon')."""
    parts = dotted.split(".")
    def rec(obj, parts):
        name = parts[0]
        if isinstance(obj, dict):
            if len(parts) == 1:
                out = dict(obj); out[name] = value
                return out
            out = dict(obj); out[name] = rec(obj.get(name, {}), parts[1:])
            return out
        if not hasattr(obj, name):
            raise ValidationError(f"unknown config path element {name!r} on {type(obj).__name__}")
        if len(parts) == 1:
            return replace(obj, **{name: value})
        return replace(obj, **{name: rec(getattr(obj, name), parts[1:])})
    return rec(config, parts)
