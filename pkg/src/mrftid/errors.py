"""Exception hierarchy.

Every error raised on purpose by this package derives from `MrftError`, and
the CLI maps each class to its own exit code.
"""


class MrftError(Exception):
    """Base class for all package errors."""


class InvalidParameter(MrftError, ValueError):
    pass


class InvalidFrequency(MrftError, ValueError):
    pass


class DegenerateDrag(InvalidParameter):
    """Zero drag makes the aerodynamic time constant infinite."""


# simulation / measurement
class Diverged(MrftError):
    pass


class NotConverged(MrftError):
    pass


class NoOscillation(MrftError):
    pass


class FormatError(MrftError, ValueError):
    pass


class SamplingError(MrftError, ValueError):
    pass


# limit-cycle prediction
class SeriesNotConverged(MrftError):
    pass


class NoLimitCycle(MrftError):
    pass


# manifolds
class CellSolveFailed(MrftError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class OutOfGridRange(MrftError, ValueError):
    def __init__(self, message, valid_range=None):
        super().__init__(message)
        self.valid_range = valid_range


class UnsupportedVersion(MrftError):
    pass


class CorruptManifold(MrftError):
    pass


class StaleManifold(MrftError):
    pass


# identification
class NoIntersection(MrftError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoFeasibleEstimate(MrftError):
    pass


class NoAmplitudeMatch(MrftError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class UnreliableStatistics(MrftError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


class NoStepDetected(MrftError):
    pass
