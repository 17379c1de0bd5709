"""Exception types shared across the package."""


class FFINetError(Exception):
    """Base class for all package errors."""


class DimensionError(FFINetError, ValueError):
    """Tensor shapes or channel counts are incompatible with an operation."""


class ConfigError(FFINetError, ValueError):
    """A configuration violates a structural constraint."""


class ContractError(FFINetError, ValueError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class NonFiniteError(FFINetError, ArithmeticError):
    """A NaN or Inf appeared in a tensor while debug checks were enabled."""


class FormatError(FFINetError, ValueError):
    """A binary container has a bad magic number, version or layout."""


class BoundsError(FormatError):
    """A container record points outside the available payload."""


class MissingRecordError(FFINetError, KeyError):
    """A named record is absent from a container."""


class GenerationError(FFINetError, RuntimeError):
    """Random generation could not satisfy its invariants within the retry budget."""


class TrainingError(FFINetError, RuntimeError):
    """Training diverged (non-finite loss)."""
