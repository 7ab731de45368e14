"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class StructureError(ValueError):
    """A constitutive law violates a structural requirement (monotonicity,
    convexity, integrability of the vacuum quadrature, ...)."""


class ConjugateDomainError(DomainError):
    """The convex conjugate is +infinity at the requested stress.

    Carries the direction along which the supremum diverges so callers can
    distinguish genuinely infinite dissipation from overflow.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.violating_direction = direction


class ConfigurationError(ValueError):
    """A scenario or discretization parameter set is inconsistent."""


class StepRejection(RuntimeError):
    """A time step was rejected; carries a suggested smaller step size."""

    def __init__(self, message, suggested_dt=None, diagnostics=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt
        self.diagnostics = diagnostics or {}


class NewtonError(RuntimeError):
    """The Newton solve for the velocity coefficients failed to converge."""

    def __init__(self, message, residual_norm=None, iterations=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


class AdvanceAborted(RuntimeError):
    """Time marching aborted; carries the partial trajectory computed so far."""

    def __init__(self, message, partial=None, cause=None):
        super().__init__(message)
        self.partial = partial
        self.cause = cause
