"""Pure-Python (numpy) implementations of the hot kernels.

Two kernels live here, mirrored by the compiled extension `_kernels_cy`:

* ``ipm_solve`` — dense primal-dual interior point method (Mehrotra
  predictor-corrector) for convex QPs with equalities and two-sided
  inequalities.
* ``dyn_core`` — all per-tick quantities of the planar floating-base biped
  (mass matrix, bias forces, foot/CoM kinematics, centroidal angular
  momentum) in one forward pass.

The packed model parameter layout and the body/DoF numbering are shared
between backends; see `model.pack_params`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

BACKEND_NAME = "python"

# ---------------------------------------------------------------------------
# Interior-point QP kernel
# ---------------------------------------------------------------------------

# status codes shared with the compiled kernel
IPM_OPTIMAL = 0
IPM_MAX_ITERS = 1
IPM_INFEASIBLE = 2
IPM_UNBOUNDED = 3

_REG = 1e-9          # static diagonal regularization of the reduced KKT
_FRAC = 0.99         # fraction-to-boundary
_DIVERGE = 1e12


def _max_step(x, dx):
    """Largest alpha in (0, 1] with x + alpha*dx >= 0 (x > 0 elementwise)."""
    neg = dx < 0.0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-x[neg] / dx[neg])))


def ipm_solve(P, q, Aeq, beq, C, lb, ub, tol, max_iters, z0=None):
    """Solve min 1/2 z'Pz + q'z  s.t.  Aeq z = beq,  lb <= C z <= ub.

    Infinite entries of lb/ub drop that side of the row. Returns
    ``(z, y, lam_lo, lam_hi, status, iterations)`` with status one of the
    IPM_* codes. Deterministic for identical inputs.
    """
    P = np.ascontiguousarray(P, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    n = q.shape[0]
    me = beq.shape[0]
    mi = lb.shape[0]
    Aeq = np.ascontiguousarray(Aeq, dtype=float).reshape(me, n)
    C = np.ascontiguousarray(C, dtype=float).reshape(mi, n)

    has_l = np.isfinite(lb)
    has_u = np.isfinite(ub)
    n_sides = int(np.count_nonzero(has_l) + np.count_nonzero(has_u))
    lb_f = np.where(has_l, lb, 0.0)
    ub_f = np.where(has_u, ub, 0.0)

    dim = n + me
    K = np.zeros((dim, dim))
    rhs = np.empty(dim)

    # initial point: equality-regularized Newton step from z0 (or origin)
    K[:n, :n] = P + _REG * np.eye(n)
    K[:n, n:] = Aeq.T
    K[n:, :n] = Aeq
    K[n:, n:] = -_REG * np.eye(me)
    rhs[:n] = -q
    rhs[n:] = beq
    sol = np.linalg.solve(K, rhs)
    z = sol[:n].copy()
    y = sol[n:].copy()
    if z0 is not None and np.all(np.isfinite(z0)):
        w_hint = C @ z0
        w_cold = C @ z
        viol_hint = _bound_violation(w_hint, lb_f, ub_f, has_l, has_u)
        viol_cold = _bound_violation(w_cold, lb_f, ub_f, has_l, has_u)
        if viol_hint < viol_cold:
            z = np.asarray(z0, dtype=float).copy()

    w = C @ z
    s_lo = np.where(has_l, np.maximum(w - lb_f, 1.0), 1.0)
    s_hi = np.where(has_u, np.maximum(ub_f - w, 1.0), 1.0)
    lam_lo = np.where(has_l, 1.0, 0.0)
    lam_hi = np.where(has_u, 1.0, 0.0)

    if mi == 0 and me == 0 and n_sides == 0:
        # unconstrained: single solve decides
        if np.max(np.abs(P @ z + q)) <= tol:
            return z, y, lam_lo, lam_hi, IPM_OPTIMAL, 1
        return z, y, lam_lo, lam_hi, IPM_UNBOUNDED, 1

    bound_mag = 0.0
    if mi:
        bound_mag = max(float(np.max(np.abs(lb_f[has_l]))) if np.any(has_l) else 0.0,
                        float(np.max(np.abs(ub_f[has_u]))) if np.any(has_u) else 0.0)

    status = IPM_MAX_ITERS
    it = 0
    hist = []
    for it in range(1, max_iters + 1):
        w = C @ z
        lam_net = lam_hi - lam_lo
        Pz = P @ z
        Aty = Aeq.T @ y if me else np.zeros(n)
        Ctl = C.T @ lam_net if mi else np.zeros(n)
        r_dual = Pz + q + Aty + Ctl
        r_eq = Aeq @ z - beq
        g_lo = np.where(has_l, w - s_lo - lb_f, 0.0)
        g_hi = np.where(has_u, w + s_hi - ub_f, 0.0)

        prim_ineq = _bound_violation(w, lb_f, ub_f, has_l, has_u)
        comp = 0.0
        if n_sides:
            comp = max(
                float(np.max(np.abs(np.where(has_l, s_lo * lam_lo, 0.0)))) if mi else 0.0,
                float(np.max(np.abs(np.where(has_u, s_hi * lam_hi, 0.0)))) if mi else 0.0,
            )
        r_d = float(np.max(np.abs(r_dual))) if n else 0.0
        r_e = float(np.max(np.abs(r_eq))) if me else 0.0

        r_abs = max(r_d, r_e, prim_ineq, comp)
        if r_abs <= tol:
            status = IPM_OPTIMAL
            break
        # relative criterion, accepted only once absolute progress stalls
        # (absolute 1e-8 is unreachable in float64 when the data is huge)
        sc_d = max(1.0, float(np.max(np.abs(Pz))), float(np.max(np.abs(q))),
                   float(np.max(np.abs(Aty))), float(np.max(np.abs(Ctl))))
        sc_p = max(1.0, float(np.max(np.abs(w))) if mi else 0.0, bound_mag,
                   float(np.max(np.abs(beq))) if me else 0.0)
        sc_c = max(1.0, float(np.max(np.abs(w))) if mi else 0.0,
                   float(np.max(np.abs(lam_net))) if mi else 0.0)
        rel_ok = (r_d <= tol * sc_d and r_e <= tol * sc_p
                  and prim_ineq <= tol * sc_p and comp <= tol * sc_c)
        hist.append(r_abs)
        if rel_ok and len(hist) > 5 and r_abs > 0.5 * hist[-6]:
            status = IPM_OPTIMAL
            break
        if float(np.max(np.abs(z))) > _DIVERGE:
            status = IPM_UNBOUNDED
            break
        if (np.max(np.abs(lam_net)) if mi else 0.0) + (np.max(np.abs(y)) if me else 0.0) > _DIVERGE:
            status = IPM_INFEASIBLE
            break

        mu = 0.0
        if n_sides:
            mu = (float(np.dot(s_lo[has_l], lam_lo[has_l]))
                  + float(np.dot(s_hi[has_u], lam_hi[has_u]))) / n_sides

        d_lo = np.where(has_l, lam_lo / s_lo, 0.0)
        d_hi = np.where(has_u, lam_hi / s_hi, 0.0)
        D = d_lo + d_hi

        K[:n, :n] = P + C.T @ (D[:, None] * C) + _REG * np.eye(n)
        K[:n, n:] = Aeq.T
        K[n:, :n] = Aeq
        K[n:, n:] = -_REG * np.eye(me)
        lu = lu_factor(K)

        # affine (predictor) direction
        rc_lo = np.where(has_l, s_lo * lam_lo, 0.0)
        rc_hi = np.where(has_u, s_hi * lam_hi, 0.0)
        dz, dy, ds_lo, dl_lo, ds_hi, dl_hi = _ipm_direction(
            lu, K, C, r_dual, r_eq, g_lo, g_hi, rc_lo, rc_hi,
            s_lo, s_hi, lam_lo, lam_hi, has_l, has_u, n, me)

        a_p = min(_max_step(s_lo[has_l], ds_lo[has_l]) if np.any(has_l) else 1.0,
                  _max_step(s_hi[has_u], ds_hi[has_u]) if np.any(has_u) else 1.0)
        a_d = min(_max_step(lam_lo[has_l], dl_lo[has_l]) if np.any(has_l) else 1.0,
                  _max_step(lam_hi[has_u], dl_hi[has_u]) if np.any(has_u) else 1.0)

        if n_sides:
            mu_aff = (float(np.dot((s_lo + a_p * ds_lo)[has_l], (lam_lo + a_d * dl_lo)[has_l]))
                      + float(np.dot((s_hi + a_p * ds_hi)[has_u], (lam_hi + a_d * dl_hi)[has_u]))) / n_sides
            sigma = (mu_aff / mu) ** 3 if mu > 0.0 else 0.0
            # corrector with Mehrotra second-order term
            rc_lo = np.where(has_l, s_lo * lam_lo + ds_lo * dl_lo - sigma * mu, 0.0)
            rc_hi = np.where(has_u, s_hi * lam_hi + ds_hi * dl_hi - sigma * mu, 0.0)
            dz, dy, ds_lo, dl_lo, ds_hi, dl_hi = _ipm_direction(
                lu, K, C, r_dual, r_eq, g_lo, g_hi, rc_lo, rc_hi,
                s_lo, s_hi, lam_lo, lam_hi, has_l, has_u, n, me)
            a_p = min(_max_step(s_lo[has_l], ds_lo[has_l]) if np.any(has_l) else 1.0,
                      _max_step(s_hi[has_u], ds_hi[has_u]) if np.any(has_u) else 1.0)
            a_d = min(_max_step(lam_lo[has_l], dl_lo[has_l]) if np.any(has_l) else 1.0,
                      _max_step(lam_hi[has_u], dl_hi[has_u]) if np.any(has_u) else 1.0)

        a_p = min(1.0, _FRAC * a_p)
        a_d = min(1.0, _FRAC * a_d)

        z += a_p * dz
        s_lo = np.where(has_l, s_lo + a_p * ds_lo, 1.0)
        s_hi = np.where(has_u, s_hi + a_p * ds_hi, 1.0)
        y += a_d * dy
        lam_lo = np.where(has_l, lam_lo + a_d * dl_lo, 0.0)
        lam_hi = np.where(has_u, lam_hi + a_d * dl_hi, 0.0)

    return z, y, lam_lo, lam_hi, status, it


def _bound_violation(w, lb_f, ub_f, has_l, has_u):
    v = 0.0
    if w.shape[0]:
        v_lo = np.where(has_l, lb_f - w, 0.0)
        v_hi = np.where(has_u, w - ub_f, 0.0)
        v = max(float(np.max(v_lo)), float(np.max(v_hi)), 0.0)
    return v


def _ipm_direction(lu, K, C, r_dual, r_eq, g_lo, g_hi, rc_lo, rc_hi,
                   s_lo, s_hi, lam_lo, lam_hi, has_l, has_u, n, me):
    """One reduced-KKT solve (with one refinement pass); returns the full direction."""
    r_tilde = (np.where(has_u, (lam_hi * g_hi - rc_hi) / s_hi, 0.0)
               + np.where(has_l, (lam_lo * g_lo + rc_lo) / s_lo, 0.0))
    rhs = np.empty(n + me)
    rhs[:n] = -(r_dual + C.T @ r_tilde)
    rhs[n:] = -r_eq
    sol = lu_solve(lu, rhs)
    sol -= lu_solve(lu, K @ sol - rhs)   # iterative refinement
    dz = sol[:n]
    dy = sol[n:]
    Cdz = C @ dz
    ds_lo = np.where(has_l, Cdz + g_lo, 0.0)
    dl_lo = np.where(has_l, -(lam_lo * ds_lo + rc_lo) / s_lo, 0.0)
    ds_hi = np.where(has_u, -Cdz - g_hi, 0.0)
    dl_hi = np.where(has_u, -(lam_hi * ds_hi + rc_hi) / s_hi, 0.0)
    return dz, dy, ds_lo, dl_lo, ds_hi, dl_hi


# ---------------------------------------------------------------------------
# Planar biped dynamics kernel
# ---------------------------------------------------------------------------

NB = 7   # trunk, L thigh, L shin, L foot, R thigh, R shin, R foot
NV = 9   # base x, z, pitch + 3 joints per leg

_PARENT = (-1, 0, 1, 2, 0, 4, 5)
_DOF = (-1, 3, 4, 5, 6, 7, 8)   # velocity index of each body's own joint
LEFT_FOOT = 3
RIGHT_FOOT = 6

# packed parameter layout (see model.pack_params)
_P_MASS = 0
_P_INERTIA = 7
_P_JPOS = 14
_P_CPOS = 28
_P_SOLE = 42
_P_GRAV = 44
PARAM_LEN = 45


def _chain(i):
    """Rotational DoF columns affecting body i as (dof, pivot_body) pairs.

    pivot_body -1 means the floating base (pivot at trunk origin).
    """
    out = [(2, -1)]
    path = []
    b = i
    while b != 0:
        path.append(b)
        b = _PARENT[b]
    for b in reversed(path):
        out.append((_DOF[b], b))
    return tuple(out)


_CHAINS = tuple(_chain(i) for i in range(NB))


def dyn_core(params, q, v):
    """All per-tick dynamics quantities of the planar biped.

    Returns a dict with: H, bias, com (pos 2), com_vel (2), J_com (2x9),
    com_drift (2), k_ang (scalar), A_ang (9), ang_drift (scalar), and per
    foot ('left'/'right'): sole_pos (2), sole_pitch, sole_vel (3),
    J_sole (3x9), sole_drift (3).
    """
    params = np.asarray(params, dtype=float)
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    m = params[_P_MASS:_P_MASS + NB]
    inert = params[_P_INERTIA:_P_INERTIA + NB]
    jpos = params[_P_JPOS:_P_JPOS + 2 * NB].reshape(NB, 2)
    cpos = params[_P_CPOS:_P_CPOS + 2 * NB].reshape(NB, 2)
    sole = params[_P_SOLE:_P_SOLE + 2]
    g = params[_P_GRAV]

    # forward pass: frames, origins, coms, and their velocities
    th = np.empty(NB)
    omg = np.empty(NB)
    O = np.empty((NB, 2))      # body origins (joint pivots)
    Ov = np.empty((NB, 2))     # origin velocities
    Pc = np.empty((NB, 2))     # com positions
    Pv = np.empty((NB, 2))     # com velocities

    th[0] = q[2]
    omg[0] = v[2]
    O[0] = q[0], q[1]
    Ov[0] = v[0], v[1]
    for i in range(1, NB):
        p = _PARENT[i]
        cp, sp = np.cos(th[p]), np.sin(th[p])
        ux = cp * jpos[i, 0] - sp * jpos[i, 1]
        uz = sp * jpos[i, 0] + cp * jpos[i, 1]
        O[i, 0] = O[p, 0] + ux
        O[i, 1] = O[p, 1] + uz
        Ov[i, 0] = Ov[p, 0] - omg[p] * uz
        Ov[i, 1] = Ov[p, 1] + omg[p] * ux
        th[i] = th[p] + q[_DOF[i]]
        omg[i] = omg[p] + v[_DOF[i]]
    for i in range(NB):
        ci, si = np.cos(th[i]), np.sin(th[i])
        rx = ci * cpos[i, 0] - si * cpos[i, 1]
        rz = si * cpos[i, 0] + ci * cpos[i, 1]
        Pc[i, 0] = O[i, 0] + rx
        Pc[i, 1] = O[i, 1] + rz
        Pv[i, 0] = Ov[i, 0] - omg[i] * rz
        Pv[i, 1] = Ov[i, 1] + omg[i] * rx

    # com Jacobians and J̇v per body
    J = np.zeros((NB, 3, NV))
    Jdv = np.zeros((NB, 2))    # angular component is identically zero
    for i in range(NB):
        J[i, 0, 0] = 1.0
        J[i, 1, 1] = 1.0
        for dof, piv in _CHAINS[i]:
            px, pz = (O[0] if piv < 0 else O[piv])
            pvx, pvz = (Ov[0] if piv < 0 else Ov[piv])
            J[i, 0, dof] = -(Pc[i, 1] - pz)
            J[i, 1, dof] = Pc[i, 0] - px
            J[i, 2, dof] = 1.0
            vd = v[dof]
            Jdv[i, 0] += vd * -(Pv[i, 1] - pvz)
            Jdv[i, 1] += vd * (Pv[i, 0] - pvx)

    # mass matrix and bias via virtual work
    Mdiag = np.stack([m, m, inert], axis=1)          # (NB, 3)
    H = np.einsum("bik,bi,bil->kl", J, Mdiag, J)
    f = np.empty((NB, 3))
    f[:, 0] = m * Jdv[:, 0]
    f[:, 1] = m * Jdv[:, 1] + m * g
    f[:, 2] = 0.0
    bias = np.einsum("bik,bi->k", J, f)

    # aggregate CoM
    M = float(np.sum(m))
    com = (m @ Pc) / M
    com_vel = (m @ Pv) / M
    J_com = np.einsum("b,bik->ik", m, J[:, :2, :]) / M
    com_drift = (m @ Jdv) / M

    # centroidal angular momentum (scalar, about the CoM)
    rel = Pc - com
    k_ang = float(np.sum(inert * omg) + np.sum(m * (rel[:, 0] * Pv[:, 1] - rel[:, 1] * Pv[:, 0])))
    A_ang = (np.einsum("b,bk->k", inert, J[:, 2, :])
             + np.einsum("b,bk->k", m * rel[:, 0], J[:, 1, :])
             - np.einsum("b,bk->k", m * rel[:, 1], J[:, 0, :]))
    ang_drift = float(np.sum(m * (rel[:, 0] * Jdv[:, 1] - rel[:, 1] * Jdv[:, 0])))

    out = {
        "H": H, "bias": bias,
        "com": com, "com_vel": com_vel, "J_com": J_com, "com_drift": com_drift,
        "k_ang": k_ang, "A_ang": A_ang, "ang_drift": ang_drift,
        "mass": M,
    }
    for name, fb in (("left", LEFT_FOOT), ("right", RIGHT_FOOT)):
        ci, si = np.cos(th[fb]), np.sin(th[fb])
        rx = ci * sole[0] - si * sole[1]
        rz = si * sole[0] + ci * sole[1]
        spos = np.array([O[fb, 0] + rx, O[fb, 1] + rz])
        svel = np.array([Ov[fb, 0] - omg[fb] * rz, Ov[fb, 1] + omg[fb] * rx, omg[fb]])
        Js = np.zeros((3, NV))
        Js[0, 0] = 1.0
        Js[1, 1] = 1.0
        drift = np.zeros(3)
        for dof, piv in _CHAINS[fb]:
            px, pz = (O[0] if piv < 0 else O[piv])
            pvx, pvz = (Ov[0] if piv < 0 else Ov[piv])
            Js[0, dof] = -(spos[1] - pz)
            Js[1, dof] = spos[0] - px
            Js[2, dof] = 1.0
            vd = v[dof]
            drift[0] += vd * -(svel[1] - pvz)
            drift[1] += vd * (svel[0] - pvx)
        out[name] = {
            "sole_pos": spos, "sole_pitch": float(th[fb]), "sole_vel": svel,
            "J_sole": Js, "sole_drift": drift,
        }
    return out
