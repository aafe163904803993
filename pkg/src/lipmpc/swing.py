"""Swing-foot trajectory generation.

Horizontal components are single quintics with zero boundary velocity and
acceleration; the vertical component is two quintic segments meeting at the
apex with zero velocity and acceleration. Quintics (rather than cycloids)
give exact boundary accelerations for the task-space controller's
feedforward. Trajectories can be retargeted mid-swing with a C2 splice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RetargetTooLateError, ValidationError

MIN_RETARGET_FRACTION = 0.1   # refuse retargets in the last 10% of the swing


@dataclass(frozen=True)
class SwingSpec:
    start: tuple          # (x, y, z) at liftoff
    target: tuple         # (x, y, z) at touchdown
    apex_height: float    # above max(start_z, target_z)
    duration: float
    # downward speed at touchdown. Zero gives a zero-velocity kiss; walking
    # uses a small nonzero value so the contact event lands at the nominal
    # time instead of wandering through the flat quintic tail.
    touchdown_velocity: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.start, dtype=float)
        t = np.asarray(self.target, dtype=float)
        if s.shape != (3,) or t.shape != (3,):
            raise ValidationError("start/target must be 3-vectors")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
            raise ValidationError("non-finite swing endpoints")
        if not (self.duration > 0.0 and math.isfinite(self.duration)):
            raise ValidationError(f"swing duration must be > 0, got {self.duration}")
        if not (self.apex_height > 0.0 and math.isfinite(self.apex_height)):
            raise ValidationError(f"apex_height must be > 0, got {self.apex_height}")
        if self.touchdown_velocity < 0.0:
            raise ValidationError("touchdown_velocity is a descent speed, must be >= 0")
        object.__setattr__(self, "start", tuple(map(float, s)))
        object.__setattr__(self, "target", tuple(map(float, t)))


@dataclass(frozen=True)
class SwingSample:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def _quintic(t0, t1, p0, v0, a0, p1, v1, a1):
    """Quintic coefficients (local time s = t - t0) matching both boundary triples."""
    L = t1 - t0
    if L <= 0.0:
        raise ValidationError(f"degenerate quintic segment [{t0}, {t1}]")
    c0, c1, c2 = p0, v0, 0.5 * a0
    M = np.array([
        [L ** 3, L ** 4, L ** 5],
        [3 * L ** 2, 4 * L ** 3, 5 * L ** 4],
        [6 * L, 12 * L ** 2, 20 * L ** 3],
    ])
    rhs = np.array([
        p1 - (c0 + c1 * L + c2 * L * L),
        v1 - (c1 + 2 * c2 * L),
        a1 - a0,
    ])
    c3, c4, c5 = np.linalg.solve(M, rhs)
    return (t0, t1, np.array([c0, c1, c2, c3, c4, c5]))


def _eval_segment(seg, t):
    t0, _, c = seg
    s = t - t0
    p = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))))
    v = c[1] + s * (2 * c[2] + s * (3 * c[3] + s * (4 * c[4] + s * 5 * c[5])))
    a = 2 * c[2] + s * (6 * c[3] + s * (12 * c[4] + s * 20 * c[5]))
    return p, v, a


class SwingTrajectory:
    """Piecewise-quintic swing trajectory; immutable after construction."""

    def __init__(self, segments, duration, apex_z, apex_time, target, apex_height,
                 touchdown_velocity=0.0):
        self._segments = segments      # per axis: list of (t0, t1, coeffs)
        self.duration = float(duration)
        self.apex_z = float(apex_z)
        self.apex_time = float(apex_time)
        self.target = np.asarray(target, dtype=float)
        self.apex_height = float(apex_height)
        self.touchdown_velocity = float(touchdown_velocity)

    def sample(self, t: float) -> SwingSample:
        if not (0.0 <= t <= self.duration + 1e-12):
            raise ValidationError(f"sample time {t} outside [0, {self.duration}]")
        t = min(t, self.duration)
        pos = np.empty(3)
        vel = np.empty(3)
        acc = np.empty(3)
        for ax in range(3):
            segs = self._segments[ax]
            seg = segs[-1]
            for cand in segs:
                if t <= cand[1] + 1e-12:
                    seg = cand
                    break
            pos[ax], vel[ax], acc[ax] = _eval_segment(seg, t)
        return SwingSample(pos, vel, acc)


def plan(spec: SwingSpec) -> SwingTrajectory:
    """Plan a fresh swing from rest through the apex to the target."""
    T = spec.duration
    apex_z = max(spec.start[2], spec.target[2]) + spec.apex_height
    t_apex = 0.5 * T
    segments = []
    for ax in (0, 1):
        segments.append([_quintic(0.0, T, spec.start[ax], 0.0, 0.0,
                                  spec.target[ax], 0.0, 0.0)])
    segments.append([
        _quintic(0.0, t_apex, spec.start[2], 0.0, 0.0, apex_z, 0.0, 0.0),
        _quintic(t_apex, T, apex_z, 0.0, 0.0, spec.target[2],
                 -spec.touchdown_velocity, 0.0),
    ])
    return SwingTrajectory(segments, T, apex_z, t_apex, spec.target, spec.apex_height,
                           spec.touchdown_velocity)


def retarget(traj: SwingTrajectory, t_now: float, new_target) -> SwingTrajectory:
    """Re-aim an in-flight swing at a new touchdown point.

    The new trajectory matches the old position/velocity/acceleration at
    t_now (C2 splice) and lands at new_target with zero terminal velocity
    and acceleration. Raises RetargetTooLateError when less than 10% of the
    swing remains; the caller keeps the old target in that case.
    """
    new_target = np.asarray(new_target, dtype=float).reshape(3)
    if not np.all(np.isfinite(new_target)):
        raise ValidationError("non-finite retarget")
    T = traj.duration
    if t_now < 0.0 or t_now >= T:
        raise ValidationError(f"retarget time {t_now} outside [0, {T})")
    if T - t_now < MIN_RETARGET_FRACTION * T:
        raise RetargetTooLateError(
            f"retarget at t={t_now:.4f} with only {T - t_now:.4f}s of {T:.4f}s left")

    here = traj.sample(t_now)

    def _prefix(ax):
        """Old segments strictly before the splice (kept so [0, t_now] still samples)."""
        out = []
        for seg in traj._segments[ax]:
            if seg[1] <= t_now + 1e-15:
                out.append(seg)
            elif seg[0] < t_now:
                out.append((seg[0], t_now, seg[2]))
        return out

    segments = []
    for ax in (0, 1):
        segs = _prefix(ax)
        segs.append(_quintic(t_now, T, here.position[ax], here.velocity[ax],
                             here.acceleration[ax], new_target[ax], 0.0, 0.0))
        segments.append(segs)

    segs_z = _prefix(2)
    apex_z = max(traj.apex_z, new_target[2] + traj.apex_height)
    v_td = -traj.touchdown_velocity
    if t_now < traj.apex_time:
        segs_z.append(_quintic(t_now, traj.apex_time, here.position[2], here.velocity[2],
                               here.acceleration[2], apex_z, 0.0, 0.0))
        segs_z.append(_quintic(traj.apex_time, T, apex_z, 0.0, 0.0, new_target[2], v_td, 0.0))
    else:
        segs_z.append(_quintic(t_now, T, here.position[2], here.velocity[2],
                               here.acceleration[2], new_target[2], v_td, 0.0))
    segments.append(segs_z)
    return SwingTrajectory(segments, T, apex_z, traj.apex_time, new_target,
                           traj.apex_height, traj.touchdown_velocity)
