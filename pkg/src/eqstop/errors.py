"""Exception hierarchy shared by every module."""


class EqStopError(Exception):
    """Base class for all errors raised by eqstop."""


class NonFinite(EqStopError, ArithmeticError):
    pass


class ToleranceNotMet(EqStopError):
    pass


class NoSignChange(EqStopError, ValueError):
    pass


class MaxIterExceeded(EqStopError):
    pass


class NegativeTime(EqStopError, ValueError):
    pass


class DivisionByZero(EqStopError, ZeroDivisionError):
    pass


class DomainError(EqStopError, ValueError):
    pass


class TimeOrder(EqStopError, ValueError):
    pass


class InvalidBeta(EqStopError, ValueError):
    pass


class NoInteriorCrossing(EqStopError):
    pass


class NonConvergence(EqStopError):
    """Raised when a policy iteration does not reach a fixed point.

    The partial trace, when available, is attached as ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptyPath(EqStopError, ValueError):
    pass


class GridTooCoarse(EqStopError):
    pass


class ConfigError(EqStopError, ValueError):
    pass


class HorizonTruncationWarning(RuntimeWarning):
    """Too many simulated paths reached the horizon without stopping."""
