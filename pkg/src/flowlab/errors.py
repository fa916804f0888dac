"""Exception types shared across the package."""


class FlowLabError(Exception):
    """Base class for all flowlab errors."""


class ValidationError(FlowLabError, ValueError):
    """Bad configuration, shapes, orderings, or arguments."""


class NumericalError(FlowLabError, ArithmeticError):
    """Non-finite values where finite ones are required (diverged training, NaN gradients)."""
