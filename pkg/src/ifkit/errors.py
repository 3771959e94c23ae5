"""Exception types shared across the package."""


class IfkError(Exception):
    """Base class for all package errors."""


class InvalidInput(IfkError, ValueError):
    """Arguments violate a documented precondition."""


class NumericalDegeneracy(IfkError, ArithmeticError):
    """A computation hit a degenerate numerical configuration."""


class ResourceLimit(IfkError):
    """Input size exceeds a configured cap."""
