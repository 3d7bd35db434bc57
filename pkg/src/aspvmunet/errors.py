"""Exception types shared across the package."""

from .numerics.tensor import DimensionError, NumericError


class ConfigError(ValueError):
    """A configuration value or flag combination is invalid."""


class DataError(ValueError):
    """Input data violates its contract (e.g. a non-binary mask)."""


__all__ = ["ConfigError", "DataError", "DimensionError", "NumericError"]
