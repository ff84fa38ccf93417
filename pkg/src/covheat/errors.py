"""Exception hierarchy shared by all covheat modules."""


class CovheatError(Exception):
    """Base class for all errors raised by covheat."""


# graph construction / lookup
class GraphError(CovheatError, ValueError):
    pass


class DuplicateVertex(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class NonPositiveMeasure(GraphError):
    pass


class NegativeWeight(GraphError):
    pass


class Disconnected(GraphError):
    pass


class UnknownVertex(GraphError, KeyError):
    pass


class EmptySubset(GraphError):
    pass


class StartOutsideSubset(GraphError):
    pass


# bundle data
class BundleError(CovheatError, ValueError):
    pass


class ValidationFailed(BundleError):
    pass


class RankMismatch(ValidationFailed):
    pass


class MissingConnection(ValidationFailed):
    pass


class ExtraConnection(ValidationFailed):
    pass


class NotAnEdge(BundleError):
    pass


class NotAntisymmetric(BundleError):
    pass


# numerics
class NegativeTime(CovheatError, ValueError):
    pass


class NonPositiveTime(NegativeTime):
    pass


class SpectralConditionViolated(CovheatError, ValueError):
    pass


class SingularSystem(CovheatError, ArithmeticError):
    pass


class UnsupportedQ(CovheatError, ValueError):
    pass


# path queries
class BeyondHorizon(CovheatError, ValueError):
    pass


class Censored(CovheatError, ValueError):
    pass


class CensoredFractionExceeded(CovheatError, RuntimeError):
    pass


# model files
class ParseError(CovheatError, ValueError):
    def __init__(self, message, records=()):
        super().__init__(message)
        self.records = tuple(records)
