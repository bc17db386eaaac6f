"""Exception types shared across the package."""


class SoftgraspError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(SoftgraspError):
    """Invalid configuration value or schema violation."""


class MeshError(SoftgraspError):
    """Invalid mesh construction parameters or a degenerate mesh."""


class PlannerError(SoftgraspError):
    """Trajectory optimization could not be solved (e.g. singular constraints)."""


class DivergenceError(SoftgraspError):
    """An iterative solve or time integration diverged.

    Carries optional diagnostics so callers can report how far the solve got.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OptimizationError(SoftgraspError):
    """Descent on a gripper objective failed; keeps the last good iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
