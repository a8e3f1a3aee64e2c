"""Exception hierarchy shared by every module in the package."""


class TikhoflowError(Exception):
    """Base class for all errors raised by tikhoflow."""


class DimensionMismatch(TikhoflowError, ValueError):
    pass


class NotMonotone(TikhoflowError, ValueError):
    pass


class NonFiniteOutput(TikhoflowError, FloatingPointError):
    pass


class ProblemFileError(TikhoflowError, ValueError):
    pass


# parameter validation
class ParamError(TikhoflowError, ValueError):
    pass


class AlphaTooSmall(ParamError):
    pass


class ExponentRange(ParamError):
    pass


class TikhonovBound(ParamError):
    pass


class NonPositive(ParamError):
    pass


# integration
class IntegrationError(TikhoflowError, RuntimeError):
    """Raised when the integrator cannot continue; carries the last good state."""

    def __init__(self, message, t=None, x=None, z=None):
        super().__init__(message)
        self.t = t
        self.x = x
        self.z = z


class StepSizeUnderflow(IntegrationError):
    pass


class NonFiniteState(IntegrationError):
    pass


class InsufficientSamples(TikhoflowError, ValueError):
    pass


# tikhonov path
class NoProgress(TikhoflowError, RuntimeError):
    pass


class MaxIterations(TikhoflowError, RuntimeError):
    pass


class ContinuationStalled(TikhoflowError, RuntimeError):
    pass


# diagnostics
class InfeasibleConstants(TikhoflowError, RuntimeError):
    pass


class NotCertified(TikhoflowError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EmptyWindow(TikhoflowError, ValueError):
    pass


class AllZero(TikhoflowError, ValueError):
    pass


# primal-dual
class Infeasible(TikhoflowError, ValueError):
    pass


# cli / plotting
class ConfigError(TikhoflowError, ValueError):
    pass


class MissingColumn(TikhoflowError, KeyError):
    pass


class EmptyData(TikhoflowError, ValueError):
    pass


class ChecksFailed(TikhoflowError):
    """A run finished but at least one enabled check failed."""


class RuntimeFailure(TikhoflowError, RuntimeError):
    """A run could not complete (integration or solver failure)."""
