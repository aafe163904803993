"""Dense convex QP solver (primal-dual interior point).

Standard form:

    minimize    1/2 z'Pz + q'z
    subject to  Aeq z = beq
                lb <= C z <= ub        (either side may be +-inf)

Problem sizes here are small (tens of variables), so the KKT systems are
factored densely. Two-sided inequalities are handled natively, without
doubling rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import (QpInfeasibleError, QpMaxIterationsError, QpSolveError,
                     QpUnboundedError, ValidationError)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 100


@dataclass(frozen=True)
class QpProblem:
    """Immutable standard-form QP. P is symmetrized on construction."""

    P: np.ndarray
    q: np.ndarray
    Aeq: np.ndarray = None
    beq: np.ndarray = None
    C: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None
    c0: float = 0.0   # constant objective offset, for reporting only

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.shape[0]
        if P.shape != (n, n):
            raise ValidationError(f"P must be {n}x{n}, got {P.shape}")
        skew = float(np.max(np.abs(P - P.T))) if n else 0.0
        scale = max(1.0, float(np.max(np.abs(P)))) if n else 1.0
        if skew > 1e-12 * scale:
            raise ValidationError(f"P asymmetric: max |P - P'| = {skew:.3e}")
        P = 0.5 * (P + P.T)

        Aeq = np.zeros((0, n)) if self.Aeq is None else np.atleast_2d(np.asarray(self.Aeq, dtype=float))
        beq = np.zeros(0) if self.beq is None else np.asarray(self.beq, dtype=float).ravel()
        if Aeq.shape != (beq.shape[0], n):
            raise ValidationError(f"Aeq shape {Aeq.shape} inconsistent with beq {beq.shape} and n={n}")

        C = np.zeros((0, n)) if self.C is None else np.atleast_2d(np.asarray(self.C, dtype=float))
        mi = C.shape[0]
        lb = np.full(mi, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        ub = np.full(mi, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if C.shape != (mi, n) or lb.shape[0] != mi or ub.shape[0] != mi:
            raise ValidationError(f"C/lb/ub dimensions inconsistent: {C.shape}, {lb.shape}, {ub.shape}")
        if mi and np.any(lb > ub):
            bad = int(np.argmax(lb > ub))
            raise ValidationError(f"lb > ub at inequality row {bad}: {lb[bad]} > {ub[bad]}")
        if mi and np.any(~np.isfinite(lb) & ~np.isfinite(ub)):
            raise ValidationError("inequality row with no finite bound on either side")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(q))
                and np.all(np.isfinite(Aeq)) and np.all(np.isfinite(beq)) and np.all(np.isfinite(C))):
            raise ValidationError("non-finite entries in problem data")

        for name, val in (("P", P), ("q", q), ("Aeq", Aeq), ("beq", beq),
                          ("C", C), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, np.ascontiguousarray(val))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def n_eq(self) -> int:
        return self.beq.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.lb.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.P @ z + self.q @ z + self.c0)


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    y: np.ndarray            # equality duals
    lam_lo: np.ndarray       # duals of lb <= Cz
    lam_hi: np.ndarray       # duals of Cz <= ub
    status: str              # optimal | max_iters | infeasible | unbounded
    iterations: int
    kkt: KktResiduals
    objective: float = field(default=float("nan"))

    @property
    def lam(self) -> np.ndarray:
        """Net inequality multiplier C'(lam_hi - lam_lo) convention."""
        return self.lam_hi - self.lam_lo


_STATUS = {
    _backend.IPM_OPTIMAL: "optimal",
    _backend.IPM_MAX_ITERS: "max_iters",
    _backend.IPM_INFEASIBLE: "infeasible",
    _backend.IPM_UNBOUNDED: "unbounded",
}


def kkt_residuals(problem: QpProblem, z, y=None, lam_lo=None, lam_hi=None) -> KktResiduals:
    """Recompute all four KKT residual norms from scratch.

    Independent of solver internals: uses only the problem data and the
    candidate primal/dual point.
    """
    z = np.asarray(z, dtype=float).ravel()
    if z.shape[0] != problem.n:
        raise ValidationError(f"z has length {z.shape[0]}, problem has n={problem.n}")
    y = np.zeros(problem.n_eq) if y is None else np.asarray(y, dtype=float).ravel()
    mi = problem.n_ineq
    lam_lo = np.zeros(mi) if lam_lo is None else np.asarray(lam_lo, dtype=float).ravel()
    lam_hi = np.zeros(mi) if lam_hi is None else np.asarray(lam_hi, dtype=float).ravel()
    if y.shape[0] != problem.n_eq or lam_lo.shape[0] != mi or lam_hi.shape[0] != mi:
        raise ValidationError("dual dimensions inconsistent with problem")

    r_stat = problem.P @ z + problem.q
    if problem.n_eq:
        r_stat = r_stat + problem.Aeq.T @ y
    if mi:
        r_stat = r_stat + problem.C.T @ (lam_hi - lam_lo)
    stationarity = float(np.max(np.abs(r_stat))) if problem.n else 0.0

    primal = 0.0
    if problem.n_eq:
        primal = float(np.max(np.abs(problem.Aeq @ z - problem.beq)))
    comp = 0.0
    dual = 0.0
    if mi:
        w = problem.C @ z
        # absent sides contribute zero gap: no violation, no complementarity
        finite_l = np.isfinite(problem.lb)
        finite_u = np.isfinite(problem.ub)
        lo_gap = np.where(finite_l, w - np.where(finite_l, problem.lb, 0.0), 0.0)
        hi_gap = np.where(finite_u, np.where(finite_u, problem.ub, 0.0) - w, 0.0)
        primal = max(primal, float(np.max(np.maximum(-lo_gap, 0.0))),
                     float(np.max(np.maximum(-hi_gap, 0.0))))
        dual = max(float(np.max(np.maximum(-lam_lo, 0.0))),
                   float(np.max(np.maximum(-lam_hi, 0.0))))
        comp = max(float(np.max(np.abs(lam_lo * lo_gap))),
                   float(np.max(np.abs(lam_hi * hi_gap))))
    return KktResiduals(stationarity, primal, dual, comp)


def solve(problem: QpProblem, tol: float = DEFAULT_TOL,
          max_iters: int = DEFAULT_MAX_ITERS, warm_start=None) -> QpSolution:
    """Solve a QpProblem; never raises on non-optimal status (see solve_or_raise).

    warm_start is only an initial-point hint; correctness never depends on it.
    """
    z0 = None
    if warm_start is not None:
        z0 = np.asarray(warm_start, dtype=float).ravel()
        if z0.shape[0] != problem.n:
            z0 = None
    z, y, lam_lo, lam_hi, code, iters = _backend.ipm_solve(
        problem.P, problem.q, problem.Aeq, problem.beq,
        problem.C, problem.lb, problem.ub, float(tol), int(max_iters), z0)
    res = kkt_residuals(problem, z, y, lam_lo, lam_hi)
    status = _STATUS[code]
    if status == "optimal":
        # paranoia: never report optimal unless the from-scratch residuals
        # agree (relative to the magnitude of the data actually involved)
        scale = max(1.0,
                    float(np.max(np.abs(problem.P @ z))) if problem.n else 0.0,
                    float(np.max(np.abs(problem.q))) if problem.n else 0.0,
                    float(np.max(np.abs(problem.beq))) if problem.n_eq else 0.0)
        if res.max() > tol * 10.0 * scale:
            status = "max_iters"
    return QpSolution(z=z, y=y, lam_lo=lam_lo, lam_hi=lam_hi, status=status,
                      iterations=iters, kkt=res, objective=problem.objective(z))


def solve_or_raise(problem: QpProblem, tol: float = DEFAULT_TOL,
                   max_iters: int = DEFAULT_MAX_ITERS, warm_start=None) -> QpSolution:
    """Like solve() but maps non-optimal statuses to typed errors."""
    sol = solve(problem, tol=tol, max_iters=max_iters, warm_start=warm_start)
    if sol.status == "optimal":
        return sol
    msg = (f"QP terminated with status={sol.status} after {sol.iterations} iterations "
           f"(kkt: stat={sol.kkt.stationarity:.2e}, prim={sol.kkt.primal:.2e}, "
           f"dual={sol.kkt.dual:.2e}, comp={sol.kkt.complementarity:.2e})")
    err = {"infeasible": QpInfeasibleError,
           "max_iters": QpMaxIterationsError,
           "unbounded": QpUnboundedError}.get(sol.status, QpSolveError)
    raise err(msg, solution=sol)


def dump_problem(problem: QpProblem, path) -> None:
    """Write the problem to a plain-text row-major matrix dump for offline inspection."""
    with open(path, "w") as f:
        f.write(f"# qp dump n={problem.n} n_eq={problem.n_eq} n_ineq={problem.n_ineq}\n")
        for name, arr in (("P", problem.P), ("q", problem.q),
                          ("Aeq", problem.Aeq), ("beq", problem.beq),
                          ("C", problem.C), ("lb", problem.lb), ("ub", problem.ub)):
            arr2 = np.atleast_2d(arr)
            f.write(f"{name} {arr2.shape[0]} {arr2.shape[1]}\n")
            for row in arr2:
                f.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_problem_dump(path) -> dict:
    """Parse a dump_problem file back into arrays (testing aid)."""
    out = {}
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    i = 1  # skip header comment
    while i < len(lines):
        name, r, c = lines[i].split()
        r, c = int(r), int(c)
        rows = [[float(x) for x in lines[i + 1 + k].split()] for k in range(r)]
        out[name] = np.array(rows, dtype=float).reshape(r, c)
        i += 1 + r
    return out
