"""Kernel backend selection.

The hot kernels (QP interior point, planar dynamics) exist twice: a compiled
Cython extension `_kernels_cy` and a pure-numpy reference `_kernels_py`.
The compiled one is preferred when importable; set LIPMPC_BACKEND=py or
LIPMPC_BACKEND=c to force a choice (forcing `c` raises if the extension is
missing). Both backends implement the same algorithms; results agree to
floating-point roundoff and all tests pass under either.
"""

from __future__ import annotations

import os

_requested = os.environ.get("LIPMPC_BACKEND", "").strip().lower()
if _requested not in ("", "py", "c"):
    raise ImportError(f"LIPMPC_BACKEND must be 'py' or 'c', got {_requested!r}")

if _requested == "py":
    from . import _kernels_py as _impl
elif _requested == "c":
    from . import _kernels_cy as _impl  # type: ignore[attr-defined]
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

ipm_solve = _impl.ipm_solve
dyn_core = _impl.dyn_core
IPM_OPTIMAL = _impl.IPM_OPTIMAL
IPM_MAX_ITERS = _impl.IPM_MAX_ITERS
IPM_INFEASIBLE = _impl.IPM_INFEASIBLE
IPM_UNBOUNDED = _impl.IPM_UNBOUNDED
PARAM_LEN = _impl.PARAM_LEN
NV = _impl.NV


def backend_name() -> str:
    """'compiled' or 'python', whichever is active."""
    return "compiled" if _impl.BACKEND_NAME == "cython" else "python"
