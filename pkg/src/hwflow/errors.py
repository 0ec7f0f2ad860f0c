"""Exception hierarchy shared across the package."""


class HWFlowError(Exception):
    """Base class for all package errors."""


class DomainError(HWFlowError, ValueError):
    """An argument lies outside the domain of the operation."""


class InvariantError(HWFlowError, ValueError):
    """An input object violates a structural invariant."""


class NumericError(HWFlowError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target.

    ``estimate`` and ``error_bound`` carry whatever the routine achieved.
    """

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class ConfigError(HWFlowError, ValueError):
    """A configuration document is malformed or inconsistent."""
