"""Discrete-time footstep MPC on the LIPM.

Decision variables are the next N foot placements (stacked x,y pairs); the
per-step CoM states are eliminated through the analytic LIPM propagation, so
the problem condenses to a small strictly convex QP:

    min  sum_{k=1}^{N-1} (S_{k+1}-S*)' Q (S_{k+1}-S*) + (p_{k+1}-p_k)' R (p_{k+1}-p_k)
         [+ (p_1-p_0)' R (p_1-p_0) when regularize_first_step]
    s.t. l_i <= p_i - p_{i-1} <= u_i   for i = 1..N

with S_1 = Abar(t_td) S_0 + Bbar(t_td) p_0 and S_{k+1} = Abar(T) S_k + Bbar(T) p_k.
Position entries of Q are zero by default, so only velocity deviations are
penalized and the plan is translation invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lipm, qp
from .errors import ValidationError
from .lipm import FootPosition, LipmParams, LipmState

FEASIBILITY_TOL = 1e-7


@dataclass(frozen=True)
class FootBounds:
    """Box bounds on one consecutive placement difference p_i - p_{i-1}.

    lateral_sign flips the frontal interval so left/right steps alternate:
    +1 keeps [lower_y, upper_y], -1 maps it to [-upper_y, -lower_y].
    """

    lower: tuple[float, float]
    upper: tuple[float, float]
    lateral_sign: int = 1

    def __post_init__(self):
        if self.lateral_sign not in (1, -1):
            raise ValidationError(f"lateral_sign must be +1 or -1, got {self.lateral_sign}")
        lo, hi = self.effective()
        if not np.all(lo <= hi):
            raise ValidationError(f"FootBounds empty after lateral sign: {lo} > {hi}")

    def effective(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if self.lateral_sign < 0:
            lo[1], hi[1] = -hi[1], -self.lower[1]
        return lo, hi


def alternating_bounds(n: int, first_sign: int = -1, sagittal: float = 0.5,
                       lateral_inner: float = 0.1, lateral_outer: float = 0.35) -> list[FootBounds]:
    """Bounds for a left/right alternating gait; prevents leg crossing."""
    out = []
    sign = first_sign
    for _ in range(n):
        out.append(FootBounds(lower=(-sagittal, lateral_inner),
                              upper=(sagittal, lateral_outer), lateral_sign=sign))
        sign = -sign
    return out


def symmetric_bounds(n: int, sagittal: float = 0.5, lateral: float = 0.35) -> list[FootBounds]:
    """Sign-free box bounds (used by planar whole-body scenarios and tests)."""
    return [FootBounds(lower=(-sagittal, -lateral), upper=(sagittal, lateral)) for _ in range(n)]


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 4
    step_period: float = 0.5
    Q: np.ndarray = None            # 4x4 diagonal state weight, [x, dx, y, dy]
    R: np.ndarray = None            # 2x2 SPD step-difference weight
    desired_state: LipmState = field(default_factory=LipmState)
    bounds: list = None             # per-step FootBounds, length == horizon
    regularize_first_step: bool = True

    def __post_init__(self):
        if self.horizon < 2:
            raise ValidationError(f"MPC horizon must be >= 2, got {self.horizon}")
        if not (self.step_period > 0.0 and math.isfinite(self.step_period)):
            raise ValidationError(f"step_period must be > 0, got {self.step_period}")
        Q = np.diag([0.0, 10.0, 0.0, 10.0]) if self.Q is None else np.asarray(self.Q, dtype=float)
        if Q.shape == (4,):
            Q = np.diag(Q)
        if Q.shape != (4, 4):
            raise ValidationError(f"Q must be 4x4 (or a 4-vector diagonal), got {Q.shape}")
        if np.any(Q - np.diag(np.diag(Q)) != 0.0):
            raise ValidationError("Q must be diagonal")
        if np.any(np.diag(Q) < 0.0):
            raise ValidationError("Q diagonal entries must be >= 0")
        R = np.eye(2) if self.R is None else np.asarray(self.R, dtype=float)
        if R.shape == (2,):
            R = np.diag(R)
        if R.shape != (2, 2) or np.max(np.abs(R - R.T)) > 1e-12:
            raise ValidationError("R must be 2x2 symmetric")
        if np.min(np.linalg.eigvalsh(R)) <= 0.0:
            raise ValidationError("R must be positive definite")
        bounds = symmetric_bounds(self.horizon) if self.bounds is None else list(self.bounds)
        if len(bounds) != self.horizon:
            raise ValidationError(f"bounds list has {len(bounds)} entries, horizon is {self.horizon}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "bounds", bounds)


@dataclass(frozen=True)
class StepPlan:
    placements: list          # N FootPosition
    predicted_states: list    # N LipmState, S_1..S_N
    objective_value: float
    solver_stats: qp.QpSolution


def _condense(params: LipmParams, cfg: MpcConfig, s0: LipmState, p0: FootPosition,
              t_td: float):
    """Affine maps S_k = const_k + lin_k @ p for k=1..N, p = stacked placements."""
    N = cfg.horizon
    Atd, Btd = lipm.block_transition_matrices(params, t_td)
    AT, BT = lipm.block_transition_matrices(params, cfg.step_period)
    nvar = 2 * N
    consts = np.zeros((N, 4))
    lins = np.zeros((N, 4, nvar))
    consts[0] = Atd @ s0.as_vector() + Btd @ p0.as_vector()
    for k in range(1, N):
        consts[k] = AT @ consts[k - 1]
        lins[k] = AT @ lins[k - 1]
        lins[k][:, 2 * (k - 1):2 * k] += BT
    return consts, lins


def build_problem(params: LipmParams, cfg: MpcConfig, s0: LipmState,
                  p0: FootPosition, t_td: float) -> qp.QpProblem:
    """Condense the N-step problem into a standard-form QP in 2N variables."""
    if not (0.0 < t_td <= cfg.step_period + 1e-12):
        raise ValidationError(f"t_td must be in (0, T={cfg.step_period}], got {t_td}")
    N = cfg.horizon
    nvar = 2 * N
    consts, lins = _condense(params, cfg, s0, p0, t_td)
    sstar = cfg.desired_state.as_vector()
    p0v = p0.as_vector()

    P = np.zeros((nvar, nvar))
    qv = np.zeros(nvar)
    c0 = 0.0
    for k in range(1, N):   # state terms on S_2..S_N
        G = lins[k]
        d = consts[k] - sstar
        QG = cfg.Q @ G
        P += 2.0 * G.T @ QG
        qv += 2.0 * QG.T @ d
        c0 += float(d @ cfg.Q @ d)

    D = np.zeros((2, nvar))
    for k in range(1, N):   # difference terms p_{k+1} - p_k
        D[:] = 0.0
        D[:, 2 * k:2 * k + 2] = np.eye(2)
        D[:, 2 * (k - 1):2 * k] -= np.eye(2)
        P += 2.0 * D.T @ cfg.R @ D
    if cfg.regularize_first_step:
        E1 = np.zeros((2, nvar))
        E1[:, 0:2] = np.eye(2)
        P += 2.0 * E1.T @ cfg.R @ E1
        qv += -2.0 * E1.T @ cfg.R @ p0v
        c0 += float(p0v @ cfg.R @ p0v)

    C = np.zeros((nvar, nvar))
    lb = np.empty(nvar)
    ub = np.empty(nvar)
    for i in range(N):      # rows for p_{i+1} - p_i, i=0..N-1 (p_0 fixed)
        lo, hi = cfg.bounds[i].effective()
        C[2 * i:2 * i + 2, 2 * i:2 * i + 2] = np.eye(2)
        if i == 0:
            lb[0:2] = lo + p0v
            ub[0:2] = hi + p0v
        else:
            C[2 * i:2 * i + 2, 2 * (i - 1):2 * i] -= np.eye(2)
            lb[2 * i:2 * i + 2] = lo
            ub[2 * i:2 * i + 2] = hi
    return qp.QpProblem(P=P, q=qv, C=C, lb=lb, ub=ub, c0=c0)


def solve_plan(problem: qp.QpProblem, cfg: MpcConfig, params: LipmParams,
               s0: LipmState, p0: FootPosition, t_td: float,
               warm_start=None) -> StepPlan:
    """Solve the condensed QP and rebuild the predicted state chain.

    Raises a typed QpSolveError subclass on infeasibility or iteration limit;
    placements are never silently clipped. A post-solve feasibility check
    guards the returned plan.
    """
    sol = qp.solve_or_raise(problem, warm_start=warm_start)
    N = cfg.horizon
    placements = [FootPosition(float(sol.z[2 * k]), float(sol.z[2 * k + 1])) for k in range(N)]

    states = []
    s = lipm.propagate(params, s0, p0, t_td)
    states.append(s)
    for k in range(1, N):
        s = lipm.propagate(params, s, placements[k - 1], cfg.step_period)
        states.append(s)

    prev = p0.as_vector()
    for i, fp in enumerate(placements):
        lo, hi = cfg.bounds[i].effective()
        d = fp.as_vector() - prev
        if np.any(d < lo - FEASIBILITY_TOL) or np.any(d > hi + FEASIBILITY_TOL):
            raise ValidationError(
                f"solution violates step-difference bounds at step {i + 1}: "
                f"{d} outside [{lo}, {hi}]")
        prev = fp.as_vector()

    return StepPlan(placements=placements, predicted_states=states,
                    objective_value=float(sol.objective), solver_stats=sol)


def touchdown_velocity_for_average(params: LipmParams, step_period: float,
                                   v_avg: float) -> float:
    """Touchdown-sampled CoM velocity of the period-one gait averaging v_avg.

    The MPC cost samples the state at touchdowns, where LIPM velocity peaks;
    a periodic gait with step length L = v_avg*T has touchdown velocity

        v_td = v_avg * wT * (1 + cosh(wT)) / (2 sinh(wT))

    Commanded average velocities should be mapped through this before being
    written into desired_state, otherwise the gait settles below the command.
    """
    wt = params.omega * step_period
    if wt < 1e-12:
        return v_avg
    return v_avg * wt * (1.0 + math.cosh(wt)) / (2.0 * math.sinh(wt))


def desired_state_for_velocity(params: LipmParams, step_period: float,
                               vx_avg: float, vy_avg: float = 0.0) -> LipmState:
    """Desired MPC state for a commanded average CoM velocity."""
    return LipmState(0.0, touchdown_velocity_for_average(params, step_period, vx_avg),
                     0.0, touchdown_velocity_for_average(params, step_period, vy_avg))


def replan(params: LipmParams, cfg: MpcConfig, s_measured: LipmState,
           p0: FootPosition, phase_time: float, warm_start=None) -> StepPlan:
    """Build and solve from mid-phase state; t_td = T - phase_time.

    phase_time = 0 reproduces the once-per-step call at SSP start. The first
    placement of the returned plan is the active swing target.
    """
    if not (0.0 <= phase_time < cfg.step_period):
        raise ValidationError(f"phase_time must be in [0, T), got {phase_time}")
    t_td = cfg.step_period - phase_time
    problem = build_problem(params, cfg, s_measured, p0, t_td)
    return solve_plan(problem, cfg, params, s_measured, p0, t_td, warm_start=warm_start)
