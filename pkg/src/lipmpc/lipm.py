"""Closed-form Linear Inverted Pendulum Model.

The CoM moves in a plane at constant height z0; sagittal (x) and frontal (y)
dynamics are decoupled and identical:

    xdd = (g / z0) * (x - px)

which integrates in closed form through cosh/sinh transition matrices.
Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PendulumOverflowError, ValidationError

# e^(omega*t) beyond this is numerically fine but dynamically meaningless;
# treat it as a misconfiguration instead of saturating.
MAX_OMEGA_T = 30.0


@dataclass(frozen=True)
class LipmParams:
    """Pendulum height and gravity; omega is always recomputed from them."""

    z0: float = 0.8
    g: float = 9.81

    def __post_init__(self):
        if not (self.z0 > 0.0 and math.isfinite(self.z0)):
            raise ValidationError(f"pendulum height z0 must be positive, got {self.z0}")
        if not (self.g > 0.0 and math.isfinite(self.g)):
            raise ValidationError(f"gravity g must be positive, got {self.g}")

    @property
    def omega(self) -> float:
        """Natural frequency sqrt(g / z0), 1/s."""
        return math.sqrt(self.g / self.z0)


@dataclass(frozen=True)
class LipmState:
    """CoM state [x, dx, y, dy]; x sagittal, y frontal."""

    x: float = 0.0
    dx: float = 0.0
    y: float = 0.0
    dy: float = 0.0

    def __post_init__(self):
        for name in ("x", "dx", "y", "dy"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"LipmState.{name} must be finite")

    def as_vector(self) -> np.ndarray:
        """Stacked [Sx; Sy] = [x, dx, y, dy]."""
        return np.array([self.x, self.dx, self.y, self.dy], dtype=float)

    @staticmethod
    def from_vector(s) -> "LipmState":
        s = np.asarray(s, dtype=float).reshape(4)
        return LipmState(float(s[0]), float(s[1]), float(s[2]), float(s[3]))


@dataclass(frozen=True)
class FootPosition:
    """Current support foot position in the ground plane."""

    px: float = 0.0
    py: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.px) and math.isfinite(self.py)):
            raise ValidationError("FootPosition must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array([self.px, self.py], dtype=float)


def transition_matrices(params: LipmParams, t: float) -> tuple[np.ndarray, np.ndarray]:
    """State transition A(t) (2x2) and control map B(t) (2,) for one plane.

    A(t) = [[cosh(wt), sinh(wt)/w], [w*sinh(wt), cosh(wt)]]
    B(t) = [1 - cosh(wt), -w*sinh(wt)]
    """
    if t < 0.0 or not math.isfinite(t):
        raise ValidationError(f"propagation time must be >= 0 and finite, got {t}")
    w = params.omega
    wt = w * t
    if wt > MAX_OMEGA_T:
        raise PendulumOverflowError(
            f"omega*t = {wt:.3g} exceeds {MAX_OMEGA_T} (t={t:.3g} s, omega={w:.3g} 1/s); "
            "exp(omega*t) is dynamically meaningless at this horizon"
        )
    ch = math.cosh(wt)
    sh = math.sinh(wt)
    A = np.array([[ch, sh / w], [w * sh, ch]], dtype=float)
    B = np.array([1.0 - ch, -w * sh], dtype=float)
    return A, B


def block_transition_matrices(params: LipmParams, t: float) -> tuple[np.ndarray, np.ndarray]:
    """4x4 / 4x2 block-diagonal forms acting on [Sx; Sy] and [px, py]."""
    A, B = transition_matrices(params, t)
    Abar = np.zeros((4, 4))
    Abar[:2, :2] = A
    Abar[2:, 2:] = A
    Bbar = np.zeros((4, 2))
    Bbar[:2, 0] = B
    Bbar[2:, 1] = B
    return Abar, Bbar


def propagate(params: LipmParams, s: LipmState, p: FootPosition, t: float) -> LipmState:
    """Propagate the CoM state for duration t over a fixed support foot.

    Sagittal and frontal planes are advanced independently with the same
    transition matrices.
    """
    A, B = transition_matrices(params, t)
    sx = A[0, 0] * s.x + A[0, 1] * s.dx + B[0] * p.px
    sdx = A[1, 0] * s.x + A[1, 1] * s.dx + B[1] * p.px
    sy = A[0, 0] * s.y + A[0, 1] * s.dy + B[0] * p.py
    sdy = A[1, 0] * s.y + A[1, 1] * s.dy + B[1] * p.py
    return LipmState(float(sx), float(sdx), float(sy), float(sdy))


def orbital_energy(params: LipmParams, s: LipmState, p: FootPosition) -> tuple[float, float]:
    """Per-plane orbital energy E = v^2/2 - w^2*(d - p)^2/2, conserved by propagate."""
    w2 = params.omega ** 2
    ex = 0.5 * s.dx ** 2 - 0.5 * w2 * (s.x - p.px) ** 2
    ey = 0.5 * s.dy ** 2 - 0.5 * w2 * (s.y - p.py) ** 2
    return ex, ey
