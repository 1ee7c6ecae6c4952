"""Exception hierarchy shared by every tspmp module."""


class TSPMPError(Exception):
    """Base class for all library errors."""


class PointNotInScale(TSPMPError, ValueError):
    pass


class EmptyPredecessor(TSPMPError, ValueError):
    pass


class InvalidRange(TSPMPError, ValueError):
    pass


class InvalidStep(TSPMPError, ValueError):
    pass


class DimensionMismatch(TSPMPError, ValueError):
    pass


class ConstraintViolation(TSPMPError, ValueError):
    """A control value lies outside the admissible box."""


class NonFiniteState(TSPMPError, ArithmeticError):
    """Forward integration produced inf/nan (finite-time blow-up)."""


class GridMismatch(TSPMPError, ValueError):
    pass


class WrongPointClass(TSPMPError, ValueError):
    """A variation was requested at a point of the wrong kind (dense vs scattered)."""


class OutOfDomain(TSPMPError, ValueError):
    pass


class UnsupportedScenario(TSPMPError, ValueError):
    pass


class ParseError(TSPMPError, ValueError):
    pass


class SolveError(TSPMPError, RuntimeError):
    pass


class ExpectationMismatch(TSPMPError, AssertionError):
    pass


class MissingResult(TSPMPError, FileNotFoundError):
    pass
