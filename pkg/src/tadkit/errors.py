"""Exception hierarchy shared across the library.

The CLI maps these onto process exit codes: configuration/usage problems
exit 1, data problems exit 2, numeric failures exit 3.
"""


class TadError(Exception):
    """Base class for all library errors."""


class ConfigError(TadError):
    """Invalid configuration: bad shapes, strides, thresholds, presets."""


class UsageError(TadError):
    """API misuse: calling an operation outside its contract."""


class DataError(TadError):
    """Malformed or inconsistent input data (files, annotations, features)."""


class NumericError(TadError):
    """Numeric failure: divergence, non-finite values, failed gradient check."""
