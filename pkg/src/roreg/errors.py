"""Exception types shared across the package."""


class RoregError(Exception):
    """Base class for all package errors."""


class DimensionError(RoregError, ValueError):
    """Operand shapes are incompatible."""


class NumericalError(RoregError):
    """A numerical precondition failed (singular operator, lost accuracy)."""


class SingularResolventError(NumericalError):
    """``lambda`` lies (numerically) on the plant spectrum."""


class ResonanceError(NumericalError):
    """An exosystem frequency ``i*omega_k`` is (numerically) a closed-loop eigenvalue."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class AccuracyError(NumericalError):
    """Step refinement did not reach the requested accuracy."""


class ConfigError(RoregError, ValueError):
    """Invalid run configuration."""


class ZeroCoefficientWarning(UserWarning):
    """A structural hypothesis of a controller construction is violated."""
