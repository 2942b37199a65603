"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad dimensions, parameters, or settings."""


class UnsupportedOrderError(ConfigError):
    """A derivative order above what the jet engine propagates was requested."""


class NumericsError(ArithmeticError):
    """A numeric failure (NaN/Inf, blow-up, conditioning) with context."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = dict(context)


class ConditioningError(NumericsError):
    """Rank-deficient or ill-conditioned linear system without regularization."""


class CheckpointError(IOError):
    """A checkpoint file is unreadable, truncated, or version-incompatible."""
