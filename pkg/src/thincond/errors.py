"""Exception hierarchy shared by all thincond modules."""


class ThincondError(Exception):
    """Base class for all library errors."""


class DimensionError(ThincondError, ValueError):
    """Objects living on different windows were combined."""


class StochasticityError(ThincondError, ValueError):
    """A matrix or kernel row does not sum to one within tolerance."""


class PreconditionError(ThincondError, ValueError):
    """A required hypothesis does not hold for the given input.

    ``where`` carries the offending index or configuration, if any.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class DegenerateError(ThincondError, ValueError):
    """A normalization or conditioning denominator vanished."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class UnsupportedCombinationError(ThincondError, ValueError):
    """No closed form is available for the requested pair."""


class CycleConditionError(ThincondError, ValueError):
    """Thinning/condensation pair violates the alternating cycle condition."""

    def __init__(self, message, violation, where):
        super().__init__(message)
        self.violation = violation
        self.where = where


class TailToleranceError(ThincondError, ValueError):
    """Requested truncation tolerance cannot be met below the hard window cap."""


class SamplingError(ThincondError, RuntimeError):
    """A Monte Carlo sampler could not produce a draw (e.g. acceptance collapse)."""
