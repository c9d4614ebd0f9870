"""Exception hierarchy shared by every module."""


class DetectionError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DetectionError, ValueError):
    """Argument shape, sign or structure is wrong."""


class SingularMatrixError(DetectionError, ValueError):
    """A matrix that must be positive definite is (numerically) singular."""


class NotPSDError(DetectionError, ValueError):
    """A matrix that must be positive semidefinite has a negative eigenvalue."""


class DegenerateStatisticError(DetectionError, ValueError):
    """The statistic is undefined for this input (e.g. 0/0)."""


class ConfigError(DetectionError, ValueError):
    """Experiment configuration is invalid or under-powered."""


class StaleThresholdError(DetectionError):
    """A threshold was calibrated for a different scenario or detector."""


class InvalidComparisonError(DetectionError, ValueError):
    """Two scenarios cannot be compared (dimensions differ)."""
