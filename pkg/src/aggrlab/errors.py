"""Exception hierarchy shared by every module."""


class AggrLabError(Exception):
    """Base class for validation and domain errors raised by aggrlab."""


# model construction
class DimensionMismatch(AggrLabError):
    pass


class NotADistribution(AggrLabError):
    pass


class DegeneratePrior(AggrLabError):
    pass


class SupportTooLarge(AggrLabError):
    pass


class ZeroProbabilitySignal(AggrLabError):
    pass


class ContradictoryReports(AggrLabError):
    """A likelihood product mixes a zero factor with an infinite one."""


# metrics
class SupportMismatch(AggrLabError):
    pass


class EmptySample(AggrLabError):
    pass


class LossIdentityViolation(AggrLabError):
    """The two computations of the optimality gap disagree."""


# aggregators and learners
class UnseenProfile(AggrLabError):
    pass


class AllZeroLikelihood(AggrLabError):
    pass


class InvalidGrid(AggrLabError):
    pass


class MissingOutcomeClass(AggrLabError):
    pass


class ZeroDenominator(AggrLabError):
    pass


class InsufficientSamples(AggrLabError):
    pass


class PreconditionViolated(AggrLabError):
    pass


class NoQualifyingIndex(AggrLabError):
    pass


class InsufficientGroups(AggrLabError):
    pass


class DegenerateEstimate(AggrLabError):
    pass


# hard instances
class OddSignalSpace(AggrLabError):
    pass


class SignVectorMismatch(AggrLabError):
    pass


class EpsilonTooLarge(AggrLabError):
    pass


class InvalidDistinguisher(AggrLabError):
    pass


# harness
class UnknownBattery(AggrLabError):
    pass


class ConfigError(AggrLabError):
    pass
