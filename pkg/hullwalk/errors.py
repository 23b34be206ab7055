"""
Exception hierarchy for hullwalk.

Every numerical routine raises a subclass of HullwalkError. Plain argument
mistakes (negative counts, angles out of range) raise ValueError instead.
"""


class HullwalkError(Exception):
    """Base class for all hullwalk errors."""


class ConfigError(HullwalkError):
    """Raised for invalid run configuration or command-line input."""


class NumericalFailure(HullwalkError):
    """Base class for failures of a numerical routine on valid input."""


class NonConvergence(NumericalFailure):
    """An iterative method hit its iteration cap."""

    def __init__(self, method, iterations, detail=""):
        self.method = method
        self.iterations = iterations
        message = f"{method} did not converge after {iterations} iterations"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class Singular(NumericalFailure):
    """A solve hit a zero pivot."""


class GridOverflow(NumericalFailure):
    """A time grid left the representable floating point range."""


class DegenerateDraw(NumericalFailure):
    """A random draw landed on a measure-zero degenerate configuration."""


class InvalidRegime(NumericalFailure):
    """A bound was requested outside the regime where it says anything."""


class DegenerateInput(NumericalFailure):
    """Input vectors are linearly dependent beyond tolerance."""


class MissingGridPoint(NumericalFailure):
    """A path does not contain a time the computation needs."""

    def __init__(self, time):
        self.time = time
        super().__init__(f"path has no sample at t={time!r}")


class NotOrthogonal(NumericalFailure):
    """Two vectors expected to be orthogonal are not."""


class CapacityExceeded(NumericalFailure):
    """More constraints were requested than a coordinate cell can carry."""


class Unresolved(NumericalFailure):
    """A threshold search could not separate its bracket at the trial budget."""

    def __init__(self, message, ladder=None):
        self.ladder = list(ladder or [])
        super().__init__(message)
