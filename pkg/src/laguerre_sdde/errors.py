"""Exception hierarchy shared by all modules."""


class SDDEError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SDDEError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class IntegrabilityError(SDDEError):
    """A kernel or initial datum is not square integrable against the weight."""


class DegenerateError(SDDEError):
    """Generators of a stable subspace are linearly dependent."""


class NumericalBlowup(SDDEError, FloatingPointError):
    """A simulated state left the configured guard region."""


class SpecMismatch(SDDEError, ValueError):
    """Objects built for different weights or time grids were combined."""


class RegressionError(SDDEError, ArithmeticError):
    """Least-squares normal equations could not be solved."""


class ConfigError(SDDEError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
