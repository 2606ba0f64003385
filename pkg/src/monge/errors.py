"""Exception hierarchy shared by every module."""


class MongeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(MongeError, ValueError):
    pass


class InvalidBody(MongeError, ValueError):
    pass


class PointNotInterior(MongeError, ValueError):
    pass


class ZeroDirection(MongeError, ValueError):
    pass


class ParameterOutOfRange(MongeError, ValueError):
    pass


class InvalidMeasure(MongeError, ValueError):
    pass


class EmptyDiscretization(MongeError):
    pass


class RejectionBudgetExceeded(MongeError):
    pass


class DegenerateMeasure(MongeError):
    pass


class SolverError(MongeError):
    """Anything that goes wrong inside an LP solve."""


class Infeasible(SolverError):
    pass


class NumericalFailure(SolverError):
    pass


class EmptyAdmissibleSet(Infeasible):
    pass


class NotDistanceCost(MongeError, ValueError):
    pass


class LipschitzViolation(SolverError):
    pass


class TooLarge(MongeError, ValueError):
    pass


class EmptyNet(MongeError):
    pass


class ProvenanceMismatch(MongeError, ValueError):
    pass


class ConfigError(MongeError, ValueError):
    pass
