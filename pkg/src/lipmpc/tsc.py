"""Weighted task-space QP controller.

Decision vector (qdd, tau, F): joint accelerations, actuated torques, and
the stance contact wrench (fx, fz, moment at the sole center). The QP

    min  sum_t || A_t qdd + drift_t - cmd_t ||^2_{W_t} + ||tau||^2_{R_tau} + ||F||^2_{R_lam}
    s.t. H qdd + bias = S_a' tau + J_s' F          (dynamics, hard)
         J_s qdd = -Jdot v - baumgarte terms       (pinned stance, hard)
         |tau| <= tau_max
         F inside the friction pyramid (linear rows, no division)

uses the same stabilized contact constraint as the simulator, so with a
matched model the returned wrench equals the wrench the plant actually
produces and the pyramid constraint keeps the physical contact valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics, qp
from .errors import ValidationError
from .model import ACTUATED, ContactState, N_V, RobotModel, WholeBodyState

N_TAU = len(ACTUATED)
N_F = 3
N_DEC = N_V + N_TAU + N_F   # 18 for the default planar model

DYN_RESIDUAL_TOL = 1e-8
PYRAMID_TOL = 1e-8


@dataclass(frozen=True)
class PdGains:
    """Diagonal proportional/derivative gains of one task."""

    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        kp = np.atleast_1d(np.asarray(self.kp, dtype=float))
        kd = np.atleast_1d(np.asarray(self.kd, dtype=float))
        if kp.shape != kd.shape:
            raise ValidationError("kp and kd must have matching shapes")
        if np.any(kp < 0) or np.any(kd < 0):
            raise ValidationError("PD gains must be >= 0")
        object.__setattr__(self, "kp", kp)
        object.__setattr__(self, "kd", kd)


@dataclass(frozen=True)
class Task:
    """One tracked task: jacobian A_t, drift Adot*v, commanded rate, weight."""

    name: str
    jacobian: np.ndarray      # n_t x n_v
    drift: np.ndarray         # n_t
    command: np.ndarray       # n_t, commanded task-space rate (accelerations)
    weight: np.ndarray        # n_t x n_t PSD

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.jacobian, dtype=float))
        nt = A.shape[0]
        if A.shape[1] != N_V:
            raise ValidationError(f"task {self.name}: jacobian must have {N_V} columns")
        drift = np.asarray(self.drift, dtype=float).reshape(nt)
        cmd = np.asarray(self.command, dtype=float).reshape(nt)
        W = np.asarray(self.weight, dtype=float)
        if W.ndim == 0:
            W = np.eye(nt) * float(W)
        elif W.ndim == 1:
            W = np.diag(W)
        if W.shape != (nt, nt) or np.max(np.abs(W - W.T)) > 1e-12:
            raise ValidationError(f"task {self.name}: weight must be {nt}x{nt} symmetric")
        if np.min(np.linalg.eigvalsh(W)) < -1e-12:
            raise ValidationError(f"task {self.name}: weight must be PSD")
        for name, val in (("jacobian", A), ("drift", drift), ("command", cmd), ("weight", W)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.jacobian.shape[0]

    def residual(self, qdd) -> float:
        return float(np.linalg.norm(self.jacobian @ qdd + self.drift - self.command))


@dataclass(frozen=True)
class FrictionGeometry:
    """Friction coefficient and CoP box (half foot extents)."""

    mu: float = 0.7
    d_x_minus: float = -0.1
    d_x_plus: float = 0.1
    d_y_minus: float = -0.05
    d_y_plus: float = 0.05

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValidationError(f"mu must be > 0, got {self.mu}")
        if not (self.d_x_minus < 0 < self.d_x_plus and self.d_y_minus < 0 < self.d_y_plus):
            raise ValidationError("CoP bounds must straddle zero: d- < 0 < d+")


@dataclass(frozen=True)
class TscSolution:
    qdd: np.ndarray
    tau: np.ndarray
    wrench: np.ndarray                # (fx, fz, moment) at the sole center
    task_residuals: dict
    solver_stats: qp.QpSolution


def pd_command(gains: PdGains, acc_d, vel_d, pos_d, vel, pos) -> np.ndarray:
    """Commanded task rate: acc_d + Kd (vel_d - vel) + Kp (pos_d - pos)."""
    acc_d = np.atleast_1d(np.asarray(acc_d, dtype=float))
    out = (acc_d
           + gains.kd * (np.atleast_1d(vel_d) - np.atleast_1d(vel))
           + gains.kp * (np.atleast_1d(pos_d) - np.atleast_1d(pos)))
    return out


def momentum_command(gains: PdGains, ldot_d, com_vel_d, com_pos_d, com_vel, com_pos) -> np.ndarray:
    """Linear-momentum task command: ldot_d + Kd (v_d - v) + Kp (p_d - p)."""
    return (np.atleast_1d(np.asarray(ldot_d, dtype=float))
            + gains.kd * (np.atleast_1d(com_vel_d) - np.atleast_1d(com_vel))
            + gains.kp * (np.atleast_1d(com_pos_d) - np.atleast_1d(com_pos)))


def angular_momentum_command(kd: float, kdot_d: float, k_d: float, k: float) -> float:
    """Angular-momentum command: only a damping term, kdot_d + Kd (k_d - k)."""
    return float(kdot_d) + float(kd) * (float(k_d) - float(k))


def wrench_to_6d(wrench) -> np.ndarray:
    """Planar (fx, fz, moment) to the 6D wrench order (nx, ny, nz, fx, fy, fz)."""
    fx, fz, m = [float(x) for x in np.asarray(wrench, dtype=float).reshape(3)]
    return np.array([0.0, m, 0.0, fx, 0.0, fz])


def pyramid_contains(wrench6, friction: FrictionGeometry, tol: float = 0.0) -> bool:
    """Membership in the friction pyramid, multiplied-through (no division).

    Accepts the full 6D wrench (nx, ny, nz, fx, fy, fz). The tangential
    bounds are symmetric: |fx| <= mu fz and |fy| <= mu fz. The set is
    closed: boundary points are inside.
    """
    w = np.asarray(wrench6, dtype=float).reshape(6)
    nx, ny, _, fx, fy, fz = w
    mu = friction.mu
    return bool(
        fz >= -tol
        and abs(fx) <= mu * fz + tol
        and abs(fy) <= mu * fz + tol
        and friction.d_x_minus * fz - tol <= ny <= friction.d_x_plus * fz + tol
        and friction.d_y_minus * fz - tol <= nx <= friction.d_y_plus * fz + tol
    )


def cop_position(wrench) -> float:
    """Center of pressure along the foot (x ahead of the sole center)."""
    fx, fz, m = np.asarray(wrench, dtype=float).reshape(3)
    if fz <= 1e-9:
        return 0.0
    return float(m / fz)


def assemble_qp(model: RobotModel, state: WholeBodyState, contact: ContactState,
                tasks, friction: FrictionGeometry, reg_tau: float = 1e-4,
                reg_force: float = 1e-6, pin_contact: bool = True,
                baumgarte_omega: float = dynamics.BAUMGARTE_OMEGA,
                core: dict = None) -> qp.QpProblem:
    """Build the TSC QP over (qdd, tau, F)."""
    if not tasks:
        raise ValidationError("task list must not be empty")
    if core is None:
        core = dynamics.core_quantities(model, state)
    foot = core[contact.mode]
    H = core["H"]
    J = foot["J_sole"]

    P = np.zeros((N_DEC, N_DEC))
    qv = np.zeros(N_DEC)
    c0 = 0.0
    for t in tasks:
        A = t.jacobian
        d = t.drift - t.command
        WA = t.weight @ A
        P[:N_V, :N_V] += 2.0 * A.T @ WA
        qv[:N_V] += 2.0 * WA.T @ d
        c0 += float(d @ t.weight @ d)
    P[N_V:N_V + N_TAU, N_V:N_V + N_TAU] += 2.0 * reg_tau * np.eye(N_TAU)
    P[N_V + N_TAU:, N_V + N_TAU:] += 2.0 * reg_force * np.eye(N_F)

    n_eq = N_V + (3 if pin_contact else 0)
    Aeq = np.zeros((n_eq, N_DEC))
    beq = np.zeros(n_eq)
    Aeq[:N_V, :N_V] = H
    Aeq[:N_V, N_V:N_V + N_TAU][list(ACTUATED), range(N_TAU)] = -1.0
    Aeq[:N_V, N_V + N_TAU:] = -J.T
    beq[:N_V] = -core["bias"]
    if pin_contact:
        Aeq[N_V:, :N_V] = J
        beq[N_V:] = dynamics._contact_rhs(foot, contact.anchor, baumgarte_omega)

    # torque box (two-sided), then pyramid rows on F = (fx, fz, moment)
    mi = N_TAU + 5
    C = np.zeros((mi, N_DEC))
    lb = np.full(mi, -np.inf)
    ub = np.full(mi, np.inf)
    C[:N_TAU, N_V:N_V + N_TAU] = np.eye(N_TAU)
    lb[:N_TAU] = -model.torque_limit
    ub[:N_TAU] = model.torque_limit
    iF = N_V + N_TAU
    r = N_TAU
    C[r, iF + 1] = 1.0                                   # fz >= 0
    lb[r] = 0.0
    C[r + 1, iF] = 1.0; C[r + 1, iF + 1] = -friction.mu  # fx - mu fz <= 0
    ub[r + 1] = 0.0
    C[r + 2, iF] = 1.0; C[r + 2, iF + 1] = friction.mu   # fx + mu fz >= 0
    lb[r + 2] = 0.0
    C[r + 3, iF + 2] = 1.0; C[r + 3, iF + 1] = -friction.d_x_plus   # m - d+ fz <= 0
    ub[r + 3] = 0.0
    C[r + 4, iF + 2] = 1.0; C[r + 4, iF + 1] = -friction.d_x_minus  # m - d- fz >= 0
    lb[r + 4] = 0.0

    return qp.QpProblem(P=P, q=qv, Aeq=Aeq, beq=beq, C=C, lb=lb, ub=ub, c0=c0)


def solve_tsc(model: RobotModel, state: WholeBodyState, contact: ContactState,
              tasks, friction: FrictionGeometry, reg_tau: float = 1e-4,
              reg_force: float = 1e-6, pin_contact: bool = True,
              baumgarte_omega: float = dynamics.BAUMGARTE_OMEGA,
              core: dict = None, warm_start=None, tol: float = 1e-8) -> TscSolution:
    """Assemble and solve; verifies the solution invariants before returning.

    Raises a typed QpSolveError subclass on infeasibility (e.g. torque
    limits too tight for the commanded motion).
    """
    if core is None:
        core = dynamics.core_quantities(model, state)
    problem = assemble_qp(model, state, contact, tasks, friction, reg_tau,
                          reg_force, pin_contact, baumgarte_omega, core)
    sol = qp.solve_or_raise(problem, tol=tol, warm_start=warm_start)
    z = sol.z
    qdd = z[:N_V]
    tau = z[N_V:N_V + N_TAU]
    F = z[N_V + N_TAU:]

    foot = core[contact.mode]
    dyn_res = core["H"] @ qdd + core["bias"] - foot["J_sole"].T @ F
    dyn_res[list(ACTUATED)] -= tau
    res = float(np.max(np.abs(dyn_res)))
    if res > DYN_RESIDUAL_TOL * max(1.0, float(np.max(np.abs(core["bias"])))):
        raise ValidationError(f"TSC dynamics equality residual {res:.2e} out of tolerance")
    if not pyramid_contains(wrench_to_6d(F), friction, tol=PYRAMID_TOL * max(1.0, abs(F[1]))):
        raise ValidationError(f"TSC wrench left the friction pyramid: {F}")
    residuals = {t.name: t.residual(qdd) for t in tasks}
    return TscSolution(qdd=qdd, tau=tau, wrench=F, task_residuals=residuals,
                       solver_stats=sol)
