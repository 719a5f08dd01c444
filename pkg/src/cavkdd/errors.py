"""Exception hierarchy shared across the toolkit.

The three branches map onto the CLI exit-code scheme: input problems exit
with 2, numerical failures with 3, compatibility failures with 4.
"""


class CavkddError(Exception):
    """Base class for all toolkit errors."""


class InputError(CavkddError):
    """Bad or missing input data / arguments (CLI exit code 2)."""


class KddFormatError(InputError):
    """A raw KDD line violates the 42-field comma-separated format."""


class DatasetFormatError(InputError):
    """A prepared columnar dataset file is malformed or corrupted."""


class NumericalError(CavkddError):
    """Numerical failure during computation (CLI exit code 3)."""


class TrainingDivergedError(NumericalError):
    """Non-finite loss encountered while training."""


class GradientCheckError(NumericalError):
    """Gradient check produced non-finite values or exceeded tolerance."""


class CompatibilityError(CavkddError):
    """Mismatched artifacts, e.g. checkpoint vs data (CLI exit code 4)."""


class ShapeError(CavkddError, ValueError):
    """Operands with incompatible shapes or dtypes fed to a primitive."""


class CheckpointFormatError(CompatibilityError):
    """Checkpoint container is unreadable: bad magic, version, or digest."""
