"""Exception types raised across the package."""


class HessApproxError(Exception):
    """Base class for all package errors."""


class GridMismatch(HessApproxError, ValueError):
    pass


class NonHermitianInput(HessApproxError, ValueError):
    pass


class IndexOutOfRange(HessApproxError, IndexError):
    pass


class TooLarge(HessApproxError, ValueError):
    pass


class SeparationViolated(HessApproxError, ValueError):
    pass


class BandTooNarrow(HessApproxError, ValueError):
    pass


class RankTooLarge(HessApproxError, ValueError):
    pass


class CGNoConvergence(HessApproxError, RuntimeError):
    pass


class LineSearchFailed(HessApproxError, RuntimeError):
    pass


class NonDescentDirection(HessApproxError, RuntimeError):
    pass


class TraceTooShort(HessApproxError, ValueError):
    pass


class MissingArtifacts(HessApproxError, FileNotFoundError):
    pass


class ConfigError(HessApproxError, ValueError):
    pass
