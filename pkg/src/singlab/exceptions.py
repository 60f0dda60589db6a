"""Exception hierarchy shared by all modules."""


class SinglabError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SinglabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularPointError(SinglabError, ValueError):
    """Parameter on the boundary where scores or Fisher matrices are undefined."""


class RegularityError(SinglabError, ValueError):
    """Fisher information is numerically singular."""


class FisherValidationError(SinglabError, RuntimeError):
    """Analytic and finite-difference Fisher matrices disagree."""


class GuardError(SinglabError, RuntimeError):
    """A size guard refused an exponentially large computation."""

    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


class UnsupportedEngineError(SinglabError, ValueError):
    """The requested evidence engine does not cover this model."""


class ConvergenceError(SinglabError, RuntimeError):
    """Adaptive integration did not reach its tolerance.

    The best estimate and its error estimate are attached so callers can
    decide whether to use them anyway.
    """

    def __init__(self, message, estimate=None, err_est=None):
        super().__init__(message)
        self.estimate = estimate
        self.err_est = err_est
