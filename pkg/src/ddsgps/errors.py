"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad problem data, dimensions, or run configuration."""


class InfeasibleError(ValueError):
    """The coupling constraint cannot be met inside the boxes (Slater fails)."""


class PushSumUnderflow(ArithmeticError):
    """A push-sum weight collapsed towards zero."""


class InvariantViolation(AssertionError):
    """A runtime invariant of the iteration did not hold."""
