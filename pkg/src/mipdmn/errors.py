"""Exception hierarchy.

Every error raised by the library derives from :class:`DmnError` and carries a
``category`` used by the command line front end to pick an exit code.
"""


class DmnError(Exception):
    category = "NumericalError"


class ConfigError(DmnError):
    category = "ConfigError"


class DataError(DmnError):
    category = "DataError"


class DegenerateQuaternion(DmnError):
    pass


class NotPositiveDefinite(DmnError):
    pass


class SingularInterfaceMatrix(DmnError):
    pass


class NearIdenticalPhases(DmnError):
    pass


class AllWeightsZero(DmnError):
    pass


class PhaseHasNoWeight(DmnError):
    pass


class DimensionMismatch(ConfigError):
    pass


class DegenerateBase(ConfigError):
    pass


class NoAnchors(ConfigError):
    pass


class EmptySampling(ConfigError):
    pass


class RejectionBudgetExceeded(ConfigError):
    pass


class NonFiniteGradient(DmnError):
    pass


class Diverged(DmnError):
    pass


class ReturnMappingDiverged(DmnError):
    pass


class MaxIterationsExceeded(DmnError):
    pass
