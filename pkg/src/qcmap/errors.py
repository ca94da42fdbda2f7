"""Exception types shared across the package."""


class QcmapError(Exception):
    """Base class for all package errors."""


class GraphValidationError(QcmapError):
    """A network graph violates a structural invariant."""

    def __init__(self, message, node_id=None):
        super().__init__(message)
        self.node_id = node_id


class DomainError(QcmapError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class UnsupportedDerivativeError(QcmapError):
    """A derivative order is not available for the given activation."""


class BracketError(QcmapError):
    """Bisection endpoints do not bracket the target."""

    def __init__(self, message, f_lo=None, f_hi=None):
        super().__init__(message)
        self.f_lo = f_lo
        self.f_hi = f_hi


class UnattainableTargetError(QcmapError):
    """The requested target value lies outside the solver's reachable range."""

    def __init__(self, message, max_value=None):
        super().__init__(message)
        self.max_value = max_value


class SolverFailure(QcmapError):
    """A numerical solver exhausted its iteration or restart budget."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
