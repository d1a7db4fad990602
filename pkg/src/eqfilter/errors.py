"""Exception types raised across the package."""


class EqFilterError(Exception):
    """Base class for all package errors."""


class ChartBreakdown(EqFilterError):
    """A point left the domain of a local coordinate chart."""


class AngleNearPi(ChartBreakdown):
    pass


class AntipodePoint(ChartBreakdown):
    pass


class OutsideChart(ChartBreakdown):
    pass


class ZeroPosition(EqFilterError):
    """Position too close to the origin for bearing/range quantities."""


class RankDeficient(EqFilterError):
    pass


class CovarianceNotPD(EqFilterError):
    """Raised when a covariance loses positive definiteness.

    ``step`` carries the index of the failing step when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UsageError(EqFilterError):
    pass
