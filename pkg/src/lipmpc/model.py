"""Planar floating-base biped model.

The 3D 18-DoF robot is reduced to its sagittal plane: a single trunk body
(head/torso/waists/pelvis lumped, with composite inertia) on two
thigh/shin/foot legs. Generalized coordinates (n_q = n_v = 9):

    q = [base_x, base_z, base_pitch, L_hip, L_knee, L_ankle, R_hip, R_knee, R_ankle]

The base sits at the hip point; both hip joints coincide in the plane. The
six leg joints are actuated, the base is not. Feet are planar line feet:
the contact frame is the sole center, `ankle_height` below the ankle.

Published segment masses total 71.6 kg while the robot's stated weight is
69 kg; the per-leg masses are kept as published and the trunk lump is
scaled to 35 kg so the total is exactly 69 kg.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._backend import PARAM_LEN
from .errors import ValidationError

N_V = 9
N_Q = 9
ACTUATED = (3, 4, 5, 6, 7, 8)

ROBOT_TOTAL_MASS = 69.0

# published data: (mass kg, length m), trunk segments stacked bottom-up from the hip
TRUNK_SEGMENTS = (
    ("pelvis", 24.0, 0.18),
    ("lower_waist", 2.3, 0.12),
    ("upper_waist", 2.3, 0.12),
    ("torso", 5.9, 0.14),
    ("head", 3.1, 0.18),
)
THIGH_MASS, THIGH_LENGTH = 10.0, 0.34
SHIN_MASS, SHIN_LENGTH = 4.0, 0.30
FOOT_MASS, FOOT_LENGTH = 3.0, 0.20

DEFAULT_ANKLE_HEIGHT = 0.05
DEFAULT_TORQUE_LIMIT = 300.0


@dataclass(frozen=True)
class LinkParams:
    name: str
    mass: float
    length: float
    com_offset: float    # along the link axis from its joint (signed, see frames)
    inertia: float       # planar inertia about the com

    def __post_init__(self):
        if self.mass <= 0 or self.length <= 0:
            raise ValidationError(f"link {self.name}: mass and length must be > 0")
        if self.inertia < 0:
            raise ValidationError(f"link {self.name}: inertia must be >= 0")


@dataclass(frozen=True)
class RobotModel:
    trunk: LinkParams
    thigh: LinkParams
    shin: LinkParams
    foot: LinkParams
    ankle_height: float = DEFAULT_ANKLE_HEIGHT
    torque_limit: float = DEFAULT_TORQUE_LIMIT
    gravity: float = 9.81

    def __post_init__(self):
        if self.ankle_height <= 0:
            raise ValidationError("ankle_height must be > 0")
        if self.torque_limit <= 0:
            raise ValidationError("torque_limit must be > 0")

    @property
    def total_mass(self) -> float:
        return self.trunk.mass + 2.0 * (self.thigh.mass + self.shin.mass + self.foot.mass)

    @property
    def n_v(self) -> int:
        return N_V

    @property
    def tau_max(self) -> np.ndarray:
        return np.full(6, self.torque_limit)

    def with_trunk_payload(self, payload_mass: float) -> "RobotModel":
        """Model with a point payload carried at the trunk com.

        A point mass at the com adds no inertia about it; the com offset
        shifts toward the unchanged composite value, i.e. stays put.
        """
        if payload_mass < 0:
            raise ValidationError("payload mass must be >= 0")
        if payload_mass == 0:
            return self
        t = self.trunk
        return replace(self, trunk=replace(t, mass=t.mass + payload_mass))

    def pack_params(self) -> np.ndarray:
        """Flat parameter vector consumed by the dynamics kernels."""
        p = np.zeros(PARAM_LEN)
        masses = [self.trunk.mass, self.thigh.mass, self.shin.mass, self.foot.mass,
                  self.thigh.mass, self.shin.mass, self.foot.mass]
        inerts = [self.trunk.inertia, self.thigh.inertia, self.shin.inertia, self.foot.inertia,
                  self.thigh.inertia, self.shin.inertia, self.foot.inertia]
        # joint attachment in parent frame: hips at trunk origin, knee at the
        # end of the thigh, ankle at the end of the shin (legs hang down -z)
        jpos = [(0.0, 0.0),
                (0.0, 0.0), (0.0, -self.thigh.length), (0.0, -self.shin.length),
                (0.0, 0.0), (0.0, -self.thigh.length), (0.0, -self.shin.length)]
        cpos = [(0.0, self.trunk.com_offset),
                (0.0, self.thigh.com_offset), (0.0, self.shin.com_offset),
                (0.0, self.foot.com_offset),
                (0.0, self.thigh.com_offset), (0.0, self.shin.com_offset),
                (0.0, self.foot.com_offset)]
        p[0:7] = masses
        p[7:14] = inerts
        p[14:28] = np.asarray(jpos).ravel()
        p[28:42] = np.asarray(cpos).ravel()
        p[42:44] = (0.0, -self.ankle_height)
        p[44] = self.gravity
        return p


def _trunk_lump(target_mass: float) -> LinkParams:
    """Lump the published trunk segments into one body of target_mass."""
    raw_mass = sum(m for _, m, _ in TRUNK_SEGMENTS)
    scale = target_mass / raw_mass
    z = 0.0
    parts = []
    for _, m, length in TRUNK_SEGMENTS:
        parts.append((m * scale, z + 0.5 * length, length))
        z += length
    mass = sum(m for m, _, _ in parts)
    com = sum(m * zc for m, zc, _ in parts) / mass
    inertia = sum(m * L * L / 12.0 + m * (zc - com) ** 2 for m, zc, L in parts)
    return LinkParams("trunk", mass, z, com, inertia)


def _rod(name, mass, length, com_sign=-1.0) -> LinkParams:
    """Uniform thin rod: com at mid-length, inertia m*L^2/12."""
    return LinkParams(name, mass, length, com_sign * 0.5 * length, mass * length * length / 12.0)


def default_model(torque_limit: float = DEFAULT_TORQUE_LIMIT, gravity: float = 9.81) -> RobotModel:
    """Model built from the published segment table (total mass 69 kg)."""
    trunk_mass = ROBOT_TOTAL_MASS - 2.0 * (THIGH_MASS + SHIN_MASS + FOOT_MASS)
    foot = LinkParams("foot", FOOT_MASS, FOOT_LENGTH, -DEFAULT_ANKLE_HEIGHT,
                      FOOT_MASS * FOOT_LENGTH ** 2 / 12.0)
    return RobotModel(
        trunk=_trunk_lump(trunk_mass),
        thigh=_rod("thigh", THIGH_MASS, THIGH_LENGTH),
        shin=_rod("shin", SHIN_MASS, SHIN_LENGTH),
        foot=foot,
        torque_limit=torque_limit,
        gravity=gravity,
    )


_LINK_KEYS = {"mass", "length", "com_offset", "inertia"}
_MODEL_KEYS = {"trunk", "thigh", "shin", "foot", "ankle_height", "torque_limit", "gravity"}


def model_from_dict(cfg: dict) -> RobotModel:
    """Build a model from a config mapping; unspecified fields keep defaults.

    Link entries accept mass/length/com_offset/inertia; com_offset and
    inertia default to the uniform-rod values for the given mass/length.
    Unknown keys are errors.
    """
    if cfg is None:
        cfg = {}
    unknown = set(cfg) - _MODEL_KEYS
    if unknown:
        raise ValidationError(f"unknown model keys: {sorted(unknown)}")
    base = default_model()
    links = {}
    for name in ("trunk", "thigh", "shin", "foot"):
        cur = getattr(base, name)
        sub = cfg.get(name)
        if sub is None:
            links[name] = cur
            continue
        bad = set(sub) - _LINK_KEYS
        if bad:
            raise ValidationError(f"unknown keys in model.{name}: {sorted(bad)}")
        mass = float(sub.get("mass", cur.mass))
        length = float(sub.get("length", cur.length))
        if "com_offset" in sub:
            com = float(sub["com_offset"])
        elif name == "trunk":
            com = cur.com_offset
        elif name == "foot":
            com = -float(cfg.get("ankle_height", base.ankle_height))
        else:
            com = -0.5 * length
        if "inertia" in sub:
            inertia = float(sub["inertia"])
        else:
            inertia = mass * length * length / 12.0 if name != "trunk" else cur.inertia * mass / cur.mass
        links[name] = LinkParams(name, mass, length, com, inertia)
    return RobotModel(
        trunk=links["trunk"], thigh=links["thigh"], shin=links["shin"], foot=links["foot"],
        ankle_height=float(cfg.get("ankle_height", base.ankle_height)),
        torque_limit=float(cfg.get("torque_limit", base.torque_limit)),
        gravity=float(cfg.get("gravity", base.gravity)),
    )


@dataclass(frozen=True)
class WholeBodyState:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(N_Q).copy()
        v = np.asarray(self.v, dtype=float).reshape(N_V).copy()
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ValidationError("non-finite whole-body state")
        q.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class ContactState:
    """Exactly one support foot (instantaneous double support)."""

    mode: str                    # "left" | "right"
    anchor: np.ndarray = None    # pinned sole pose (x, z, pitch)

    def __post_init__(self):
        if self.mode not in ("left", "right"):
            raise ValidationError(f"contact mode must be left or right, got {self.mode!r}")
        a = np.zeros(3) if self.anchor is None else np.asarray(self.anchor, dtype=float).reshape(3).copy()
        a.flags.writeable = False
        object.__setattr__(self, "anchor", a)

    @property
    def swing_side(self) -> str:
        return "right" if self.mode == "left" else "left"

    @property
    def constraint_dim(self) -> int:
        return 3


def standing_configuration(model: RobotModel, com_height: float,
                           foot_x: float = 0.0, ground_z: float = 0.0) -> np.ndarray:
    """Symmetric flat-footed configuration with the CoM over the soles.

    Solves for (base_x, base_z, hip, knee) with ankle = -(hip+knee) via a
    damped Newton iteration on (sole_x, sole_z, com_x, com_z). Raises when
    the requested CoM height is kinematically unreachable.
    """
    from . import dynamics  # local import to avoid a cycle

    def build_q(u):
        bx, bz, hip, knee = u
        ankle = -(hip + knee)
        return np.array([bx, bz, 0.0, hip, knee, ankle, hip, knee, ankle])

    def residual(u):
        st = WholeBodyState(build_q(u), np.zeros(N_V))
        core = dynamics.core_quantities(model, st)
        sole = core["left"]["sole_pos"]
        return np.array([sole[0] - foot_x, sole[1] - ground_z,
                         core["com"][0] - foot_x, core["com"][1] - (ground_z + com_height)])

    u = np.array([foot_x, ground_z + com_height, -0.3, 0.6])
    for _ in range(60):
        r = residual(u)
        if np.max(np.abs(r)) < 1e-12:
            break
        Jn = np.zeros((4, 4))
        for j in range(4):
            du = np.zeros(4)
            du[j] = 1e-7
            Jn[:, j] = (residual(u + du) - residual(u - du)) / 2e-7
        try:
            step = np.linalg.solve(Jn, r)
        except np.linalg.LinAlgError:
            raise ValidationError("standing pose solve hit a singular Jacobian "
                                  f"(com_height={com_height} likely unreachable)")
        u = u - np.clip(step, -0.3, 0.3)
    else:
        raise ValidationError(f"standing pose did not converge for com_height={com_height}")
    if u[3] < 1e-4:
        raise ValidationError(f"standing pose needs knee bend >= 0, got {u[3]:.4f} "
                              f"(com_height={com_height} too high)")
    return build_q(u)
