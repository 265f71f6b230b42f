"""Exception hierarchy shared by every module."""


class LipconfError(Exception):
    pass


class MetricError(LipconfError, ValueError):
    pass


class AsymmetricMetric(MetricError):
    pass


class NegativeDistance(MetricError):
    pass


class TriangleViolation(MetricError):
    pass


class ZeroDistanceDistinctPoints(MetricError):
    pass


class DimensionMismatch(LipconfError, ValueError):
    pass


class ShapeMismatch(LipconfError, ValueError):
    pass


class InvalidDistribution(LipconfError, ValueError):
    pass


class SingularSystem(LipconfError, ArithmeticError):
    pass


class ConsistencyFailure(LipconfError, ArithmeticError):
    """Two routes to the same quantity disagree (a solver bug, not a math fact)."""


class IdentityViolation(ConsistencyFailure):
    pass


class NoApplicableCandidate(LipconfError):
    pass


class ContractionUnreachable(LipconfError):
    pass


class InstanceFormatError(LipconfError, ValueError):
    pass
