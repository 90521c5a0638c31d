"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, NumericError -> 2,
verification failures -> 3.
"""


class CuprlError(Exception):
    """Base class for all package errors."""


class DimensionError(CuprlError, ValueError):
    """Shapes or lengths of inputs do not match what an operation expects."""


class NumericError(CuprlError, RuntimeError):
    """A non-finite value appeared where training cannot continue."""


class ConfigError(CuprlError, ValueError):
    """A configuration file, key, or value is invalid."""


class CheckpointError(CuprlError, ValueError):
    """A checkpoint file is missing, corrupt, or has an unknown version."""
