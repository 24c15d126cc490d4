"""Exception types shared across the package."""


class FunridgeError(Exception):
    """Base class for all funridge errors."""


class ValidationError(FunridgeError, ValueError):
    """An input violates a documented invariant or precondition."""


class DomainError(ValidationError):
    """An evaluation point lies outside the basis domain."""


class ConditioningError(FunridgeError, ArithmeticError):
    """A linear system is numerically singular or indefinite."""


class SelectionError(FunridgeError, RuntimeError):
    """A tuning search found no admissible candidate."""
