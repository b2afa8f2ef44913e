"""Exception types raised across the package."""


class VisClustError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(VisClustError, ValueError):
    pass


class InvalidInputError(VisClustError, ValueError):
    pass


class InsufficientDataError(VisClustError, ValueError):
    pass


class InfeasibleError(VisClustError, ValueError):
    """More clusters requested than there are points."""


class BackfillError(VisClustError, RuntimeError):
    pass


class NoStructureError(VisClustError, RuntimeError):
    """No projection produced a single connected component."""


class UndefinedMetricError(VisClustError, ValueError):
    pass


class GenerationError(VisClustError, RuntimeError):
    pass


class DataParseError(VisClustError, ValueError):
    pass
