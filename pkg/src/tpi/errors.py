"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class ResourceBudgetError(RuntimeError):
    """Raised when an operation would exceed a configured memory/size budget."""


class DegenerateIterateError(RuntimeError):
    """Raised when a power update hits a (measure-zero) zero contraction."""
