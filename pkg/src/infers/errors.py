"""Exception types raised by the estimation pipeline."""


class InfersError(Exception):
    """Base class for every error raised by this package."""


class EmptySubset(InfersError):
    pass


class NonFiniteInput(InfersError):
    pass


class DegenerateVariance(InfersError):
    pass


class ZeroCovariance(InfersError):
    pass


class SignInconsistency(InfersError):
    pass


class TooFewRecords(InfersError):
    pass


class SingularCovariance(InfersError):
    """Raised when the trimming scatter estimate is singular.

    ``result`` carries the fallback trim (nothing flagged) so callers can
    report the condition and continue.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingularSystem(InfersError):
    pass


class LambdaParentZero(InfersError):
    pass


class DegenerateCalibration(InfersError):
    pass


class NoMinimaFound(InfersError):
    """No local minimum exists on any autocovariance residual curve."""

    def __init__(self, message, curves=None):
        super().__init__(message)
        self.curves = curves


class NoFeasibleRegion(InfersError):
    def __init__(self, message, curves=None):
        super().__init__(message)
        self.curves = curves


class InfeasibleParams(InfersError):
    pass


class SubsetTooSmall(InfersError):
    pass


class MissingColumn(InfersError):
    pass


class ParseError(InfersError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class EmptyFile(InfersError):
    pass


class ConfigError(InfersError):
    """Invalid simulation configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
