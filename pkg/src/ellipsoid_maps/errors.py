"""Exception hierarchy shared by the solver modules."""

from __future__ import annotations


class EllipsoidMapsError(Exception):
    """Base class for every error raised by this package."""


class DomainError(EllipsoidMapsError, ValueError):
    """An argument lies outside the domain of a formula or chart."""


class ParameterError(DomainError):
    """Invalid model parameters (k, a, d)."""


class RegimeError(EllipsoidMapsError):
    """The requested construction needs the oscillatory regime a^2 < a_crit^2."""

    def __init__(self, message: str, a_sq: float, a_crit_sq: float):
        super().__init__(message)
        self.a_sq = a_sq
        self.a_crit_sq = a_crit_sq


class NonConvergenceError(EllipsoidMapsError):
    """Step-size underflow or an iteration limit was hit.

    ``last_x`` / ``last_state`` carry the last good point so callers can
    report a partial result.
    """

    def __init__(self, message: str, last_x: float | None = None, last_state=None, partial=None):
        super().__init__(message)
        self.last_x = last_x
        self.last_state = last_state
        self.partial = partial


class BracketError(EllipsoidMapsError, ValueError):
    """A root bracket does not contain a sign change."""


class SearchExhaustedError(EllipsoidMapsError):
    """The downward b scan underflowed before the requested brackets appeared."""


class InconclusiveError(EllipsoidMapsError):
    """An orbit could not be classified within the horizon, even after extending it."""
