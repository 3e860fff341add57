"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ValidationError -> 2,
NumericalError -> 3, acceptance failures -> 4.
"""


class StripflowError(Exception):
    """Base class for all package errors."""


class ParameterError(StripflowError, ValueError):
    """Invalid construction parameters (p < 1, q <= 1, bad truncation window, ...)."""


class DomainError(StripflowError, ValueError):
    """A point, node or vertex does not belong to the object it was used with."""


class ShapeError(StripflowError, ValueError):
    """Vector/matrix size does not match the degree-of-freedom count."""


class AssemblyError(StripflowError, RuntimeError):
    """Discretization produced a degenerate quantity (non-positive mass, ...)."""


class NumericalError(StripflowError, RuntimeError):
    """A solver or quadrature failed to reach its tolerance."""


class ConfigurationError(StripflowError, RuntimeError):
    """An operation was invoked on an object that lacks a required ingredient."""


class IncompatibilityError(StripflowError, ValueError):
    """Quotient weight data violates the projection compatibility conditions."""

    def __init__(self, message: str, worst_vertex=None, violations=None):
        super().__init__(message)
        self.worst_vertex = worst_vertex
        self.violations = violations or []


class ValidationError(StripflowError, ValueError):
    """A config document failed schema validation; carries the offending key path."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
