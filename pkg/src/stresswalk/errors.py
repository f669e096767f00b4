"""Exception hierarchy.

Every data error raised by the toolkit derives from :class:`StressWalkError`;
the CLI reports the class name on stderr and exits with status 1.
"""


class StressWalkError(Exception):
    """Base class for data errors."""


# ingest
class MissingFile(StressWalkError):
    pass


class MalformedRow(StressWalkError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NonPositivePrice(MalformedRow):
    pass


class NonMonotonicDate(MalformedRow):
    pass


class InsufficientData(StressWalkError):
    pass


class EmptyJoin(StressWalkError):
    pass


class WindowTooLarge(StressWalkError):
    pass


# estimators
class EmptySeries(StressWalkError):
    pass


class SetSizeTooSmall(StressWalkError):
    pass


class NoObservations(StressWalkError):
    pass


class TooFewObservations(StressWalkError):
    pass


class MissingVolume(StressWalkError):
    pass


class MissingKappaChange(StressWalkError):
    pass


# normality
class SampleTooSmall(StressWalkError):
    pass


class SampleTooLarge(StressWalkError):
    pass


class ZeroVariance(StressWalkError):
    pass


class UnpopulatedBucket(StressWalkError):
    def __init__(self, kappa: float):
        super().__init__(f"no populated bucket for kappa={kappa!r}")
        self.kappa = kappa


# riskmodel
class EmptyTable(StressWalkError):
    pass


class InvalidInterval(StressWalkError):
    pass


class EmptySelection(StressWalkError):
    pass


class NegativeHorizon(StressWalkError):
    pass


# portfolio
class WeightOutOfRange(StressWalkError):
    pass


class DegenerateAssets(StressWalkError):
    pass


class EmptyGrid(StressWalkError):
    pass


class InsufficientBucketData(StressWalkError):
    pass


class ZeroBenchmarkVariance(StressWalkError):
    pass


# simulate
class InvalidConfig(StressWalkError):
    pass


class NonPositiveDefiniteCell(StressWalkError):
    pass
