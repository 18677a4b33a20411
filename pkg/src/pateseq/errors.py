"""Exception types shared across the package."""


class PateSeqError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PateSeqError):
    pass


class InvalidWeights(PateSeqError):
    pass


class InvalidOrder(PateSeqError):
    pass


class InvalidScale(PateSeqError):
    pass


class GridMismatch(PateSeqError):
    pass


class InvalidDelta(PateSeqError):
    pass


class NoConvergence(PateSeqError):
    pass


class InsufficientMass(PateSeqError):
    pass


class InvalidRange(PateSeqError):
    pass


class TooFewSpeakers(PateSeqError):
    pass


class EmptyReference(PateSeqError):
    pass


class InfeasibleAlignment(PateSeqError):
    pass


class DivergenceDetected(PateSeqError):
    pass


class EmptySubset(PateSeqError):
    pass


class BudgetExceeded(PateSeqError):
    pass


class BudgetExhaustedBeforeOneEpoch(PateSeqError):
    pass


class InfeasibleTarget(PateSeqError):
    pass


class ZeroVector(PateSeqError):
    pass


class ConfigError(PateSeqError):
    pass
