"""Exception hierarchy shared by every module of the toolkit."""


class CoopOdeError(Exception):
    """Base class for all toolkit errors."""


class TimeOutOfWindow(CoopOdeError, ValueError):
    pass


class TimeOutOfRange(CoopOdeError, ValueError):
    """Dense-output query outside the span of a trajectory."""


class NonFiniteInput(CoopOdeError, ValueError):
    pass


class DimensionMismatch(CoopOdeError, ValueError):
    pass


class StepLimitExceeded(CoopOdeError, RuntimeError):
    pass


class StepUnderflow(CoopOdeError, RuntimeError):
    """Adaptive step size fell below the configured minimum."""


class PreconditionViolated(CoopOdeError, ValueError):
    pass


class EmptyTrajectory(CoopOdeError, ValueError):
    pass


class MixedSystems(CoopOdeError, ValueError):
    pass


class InvalidConfig(CoopOdeError, ValueError):
    pass


class ParseError(CoopOdeError, ValueError):
    """Scenario or report document does not match the schema."""
