"""Exception types shared across the package."""


class JointDiffError(Exception):
    """Base class for all package errors."""


class DimensionError(JointDiffError, ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class ContractError(JointDiffError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(JointDiffError, ValueError):
    """Invalid configuration value or missing field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DataError(JointDiffError, ValueError):
    """Empty or malformed data."""


class NonFiniteError(JointDiffError, FloatingPointError):
    """A NaN or Inf was produced."""


class FormatError(JointDiffError, ValueError):
    """A file on disk does not match the expected container format."""


class IncompatibleVersionError(FormatError):
    """A file was written with an unsupported format version."""
