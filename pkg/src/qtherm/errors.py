"""Exception types shared across the package."""


class QthermError(Exception):
    """Base class for all package errors."""


class DimensionError(QthermError):
    """Operand dimensions are inconsistent."""


class SizeLimitError(QthermError):
    """A composite Hilbert space would exceed the configured maximum."""


class PositivityError(QthermError):
    """A matrix that must be positive semidefinite is not."""


class PreconditionError(QthermError):
    """An operation was called on input violating its contract."""


class DegenerateSteadyStateError(QthermError):
    """The generator null space has dimension > 1."""

    def __init__(self, null_dim: int):
        self.null_dim = null_dim
        super().__init__(f"steady state is not unique: null space dimension {null_dim}")


class NumericError(QthermError):
    """A numerical procedure left its validity domain (e.g. positivity lost)."""


class ConfigError(QthermError):
    """Invalid run configuration or config-file syntax."""
