"""Exception types shared across the package."""


class LipmpcError(Exception):
    """Base class for all package errors."""


class ValidationError(LipmpcError):
    """A config, problem, or model failed its consistency checks."""


class PendulumOverflowError(LipmpcError):
    """exp(omega*t) would overflow or is dynamically meaningless (omega*t > 30)."""


class QpSolveError(LipmpcError):
    """QP solve did not reach an optimal point.

    Carries the partial solution (with its status and KKT residuals) so
    callers can log diagnostics.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class QpInfeasibleError(QpSolveError):
    pass


class QpMaxIterationsError(QpSolveError):
    pass


class QpUnboundedError(QpSolveError):
    pass


class SingularContactError(LipmpcError):
    """Contact KKT system ill-conditioned at the current configuration."""


class RetargetTooLateError(LipmpcError):
    """Swing retarget requested too close to touchdown; keep the old target."""
