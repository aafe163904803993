"""Whole-body dynamics of the planar biped.

Wraps the backend dynamics kernel with the public operations: mass matrix,
bias forces, contact Jacobians, constraint-consistent stepping with the
stance foot pinned, and the plastic impact map. The pinned contact is a
bilateral constraint; unilateral validity (vertical force, center of
pressure) is checked by the simulation layer a posteriori.
"""

from __future__ import annotations

import numpy as np

from . import _backend
from .errors import SingularContactError, ValidationError
from .model import ACTUATED, ContactState, N_V, RobotModel, WholeBodyState

BAUMGARTE_OMEGA = 20.0       # rad/s; gains 2w, w^2 on the pinned-contact constraint
CONTACT_COND_LIMIT = 1e12


def core_quantities(model: RobotModel, state: WholeBodyState) -> dict:
    """One-pass kernel evaluation (H, bias, CoM, feet, momentum quantities)."""
    return _backend.dyn_core(model.pack_params(), state.q, state.v)


def mass_matrix(model: RobotModel, state: WholeBodyState) -> np.ndarray:
    """Symmetric positive definite joint-space inertia matrix (9x9)."""
    return core_quantities(model, state)["H"]


def bias_forces(model: RobotModel, state: WholeBodyState) -> np.ndarray:
    """Coriolis/centrifugal plus gravity generalized forces C(q,v)v + G(q)."""
    return core_quantities(model, state)["bias"]


def gravity_forces(model: RobotModel, state: WholeBodyState) -> np.ndarray:
    """G(q) alone (bias at zero velocity)."""
    still = WholeBodyState(state.q, np.zeros(N_V))
    return core_quantities(model, still)["bias"]


def contact_jacobian(model: RobotModel, state: WholeBodyState,
                     contact: ContactState) -> np.ndarray:
    """3x9 sole-frame Jacobian (rows: x, z, pitch rate) of the support foot."""
    return core_quantities(model, state)[contact.mode]["J_sole"]


def foot_pose(model: RobotModel, state: WholeBodyState, side: str) -> np.ndarray:
    """Sole pose (x, z, pitch) of the requested foot."""
    f = core_quantities(model, state)[side]
    return np.array([f["sole_pos"][0], f["sole_pos"][1], f["sole_pitch"]])


def com_position(model: RobotModel, state: WholeBodyState) -> np.ndarray:
    return core_quantities(model, state)["com"]


def total_energy(model: RobotModel, state: WholeBodyState) -> float:
    """Kinetic plus gravitational potential energy."""
    core = core_quantities(model, state)
    kin = 0.5 * float(state.v @ core["H"] @ state.v)
    pot = core["mass"] * model.gravity * float(core["com"][1])
    return kin + pot


def _contact_rhs(core_foot, anchor, baumgarte_omega):
    """Stabilized constraint acceleration: J qdd = rhs."""
    drift = core_foot["sole_drift"]
    vel = core_foot["sole_vel"]
    err = np.array([core_foot["sole_pos"][0] - anchor[0],
                    core_foot["sole_pos"][1] - anchor[1],
                    core_foot["sole_pitch"] - anchor[2]])
    wb = baumgarte_omega
    return -drift - 2.0 * wb * vel - wb * wb * err


def _solve_kkt(H, J, rhs_dyn, rhs_con, what):
    nc = J.shape[0]
    K = np.zeros((N_V + nc, N_V + nc))
    K[:N_V, :N_V] = H
    K[:N_V, N_V:] = -J.T
    K[N_V:, :N_V] = J
    b = np.concatenate([rhs_dyn, rhs_con])
    try:
        sol = np.linalg.solve(K, b)
    except np.linalg.LinAlgError:
        raise SingularContactError(f"singular contact KKT during {what}")
    if not np.all(np.isfinite(sol)) or np.max(np.abs(K @ sol - b)) > 1e-6 * max(1.0, np.max(np.abs(b))):
        cond = np.linalg.cond(K)
        if cond > CONTACT_COND_LIMIT or not np.all(np.isfinite(sol)):
            raise SingularContactError(
                f"contact KKT ill-conditioned (cond={cond:.3e}) during {what}")
    return sol[:N_V], sol[N_V:]


def constrained_dynamics(model: RobotModel, state: WholeBodyState, contact: ContactState,
                         tau, f_ext=None, baumgarte_omega: float = BAUMGARTE_OMEGA,
                         core: dict = None):
    """Pinned-foot forward dynamics: returns (qdd, contact wrench).

    The wrench is (fx, fz, moment) expressed at the sole center, acting on
    the robot. f_ext is an optional generalized external force (length 9).
    """
    tau = np.asarray(tau, dtype=float).reshape(len(ACTUATED))
    if np.any(np.abs(tau) > model.torque_limit * (1.0 + 1e-9)):
        raise ValidationError(f"torque beyond limit {model.torque_limit}: {tau}")
    if core is None:
        core = core_quantities(model, state)
    foot = core[contact.mode]
    gen = np.zeros(N_V)
    gen[list(ACTUATED)] = tau
    if f_ext is not None:
        gen = gen + np.asarray(f_ext, dtype=float).reshape(N_V)
    rhs_con = _contact_rhs(foot, contact.anchor, baumgarte_omega)
    qdd, wrench = _solve_kkt(core["H"], foot["J_sole"], gen - core["bias"], rhs_con,
                             f"step at q={np.array2string(state.q, precision=3)}")
    return qdd, wrench


def step_dynamics(model: RobotModel, state: WholeBodyState, contact: ContactState,
                  tau, dt: float, f_ext=None,
                  baumgarte_omega: float = BAUMGARTE_OMEGA, core: dict = None):
    """One semi-implicit Euler step of the pinned-contact dynamics.

    Returns (next state, contact wrench). dt above 2 ms is rejected: the
    contact stabilization and the controller cadence assume a fine step.
    """
    if not (0.0 < dt <= 2e-3):
        raise ValidationError(f"dt must be in (0, 0.002], got {dt}")
    qdd, wrench = constrained_dynamics(model, state, contact, tau, f_ext,
                                       baumgarte_omega, core)
    v_next = state.v + dt * qdd
    q_next = state.q + dt * v_next
    return WholeBodyState(q_next, v_next), wrench


def impact_map(model: RobotModel, state: WholeBodyState,
               new_contact: ContactState) -> WholeBodyState:
    """Plastic impact: positions unchanged, new-stance-foot velocity zeroed.

    Solves H(v+ - v-) = J' * impulse with J v+ = 0; kinetic energy never
    increases.
    """
    core = core_quantities(model, state)
    J = core[new_contact.mode]["J_sole"]
    v_plus, _ = _solve_kkt(core["H"], J, core["H"] @ state.v, np.zeros(3), "impact")
    return WholeBodyState(state.q, v_plus)


def free_dynamics(model: RobotModel, state: WholeBodyState, tau=None) -> np.ndarray:
    """Unconstrained qdd = H^-1 (S'tau - bias); used by ballistic oracles."""
    core = core_quantities(model, state)
    gen = np.zeros(N_V)
    if tau is not None:
        gen[list(ACTUATED)] = np.asarray(tau, dtype=float).reshape(len(ACTUATED))
    return np.linalg.solve(core["H"], gen - core["bias"])


def gravity_compensation(model: RobotModel, state: WholeBodyState,
                         contact: ContactState):
    """Static (tau, wrench) with qdd = 0: S'tau + J'F = G(q).

    The 9 equations split into 3 base rows (solve for F) and 6 joint rows
    (solve for tau).
    """
    still = WholeBodyState(state.q, np.zeros(N_V))
    core = core_quantities(model, still)
    G = core["bias"]
    J = core[contact.mode]["J_sole"]
    A = np.zeros((N_V, N_V))
    A[:, :6][list(ACTUATED), range(6)] = 1.0
    A[:, 6:] = J.T
    sol = np.linalg.solve(A, G)
    return sol[:6], sol[6:]
