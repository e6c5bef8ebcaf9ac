"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A factorization or solve failed beyond the recovery policy."""


class DataError(ValueError):
    """Observed values are unusable (non-finite, wrong shape)."""


class ConfigError(ValueError):
    """An optimizer or experiment configuration is invalid."""
