"""Exception types raised across the package."""


class RlcDelayError(Exception):
    """Base class for all package errors."""


class InvalidFieldOrder(RlcDelayError, ValueError):
    pass


class DivisionByZero(RlcDelayError, ZeroDivisionError):
    pass


class DimensionMismatch(RlcDelayError, ValueError):
    pass


class NotSimulatable(RlcDelayError, ValueError):
    """The infinite field has no concrete elements to sample."""


class InvalidRank(RlcDelayError, ValueError):
    pass


class PoleProximity(RlcDelayError, ValueError):
    pass


class UnstableQueue(RlcDelayError, ValueError):
    """Arrival rate at or beyond the saturation point."""


class RootCountMismatch(RlcDelayError, ArithmeticError):
    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


class NumericallyDegenerate(RlcDelayError, ArithmeticError):
    pass


class CouplingViolation(RlcDelayError, AssertionError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class IOFailure(RlcDelayError, OSError):
    pass
