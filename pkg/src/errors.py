"""
Exception types for the shade-loss pipeline.

Every error raised on purpose by the library derives from ShadeAnalysisError,
so command-line wrappers can catch one type and turn it into exit code 1.
"""


class ShadeAnalysisError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


# --- Input data ---

class InputError(ShadeAnalysisError, ValueError):
    """Malformed or unusable input series."""


class InsufficientDataError(InputError):
    """Too few days to cover a seasonal cycle."""


class InsufficientCoverageError(InsufficientDataError):
    """Too few declination bins hold clear days."""


class UnsupportedCadenceError(InputError):
    """Sample spacing does not divide a day evenly."""


class InvalidDataError(InputError):
    """Data cannot be normalized (all zero or negative scale)."""


# --- Arguments and configuration ---

class ArgumentError(ShadeAnalysisError, ValueError):
    """A function argument is outside its documented range."""


class UnsupportedLatitudeError(ArgumentError):
    """Polar latitudes are not supported by the solar geometry helpers."""


class ConfigError(ArgumentError):
    """Unknown or invalid configuration key."""


# --- Downstream stages ---

class BuildError(ShadeAnalysisError):
    """Decomposition problem cannot be assembled from the given parts."""


class ReportError(ShadeAnalysisError):
    """Shade report cannot be produced."""


class MetricError(ShadeAnalysisError):
    """Estimate and reference are not on the same grid."""
