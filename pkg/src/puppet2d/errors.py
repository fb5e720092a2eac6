"""Exception hierarchy shared across the package."""


class Puppet2DError(Exception):
    """Base class for all package errors."""


class ShapeError(Puppet2DError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(Puppet2DError):
    """Invalid configuration value or file."""


class ContractError(Puppet2DError):
    """A caller violated a documented precondition."""


class DataError(Puppet2DError):
    """Invalid data content (NaN, schema violation, truncation)."""


class BehindCameraError(Puppet2DError):
    """A 3D point is at or behind the camera plane."""

    def __init__(self, msg, depths=None):
        super().__init__(msg)
        self.depths = depths


class DegenerateFrameError(Puppet2DError):
    """A frame construction (e.g. look_at) is degenerate."""


class SimulationDivergedError(Puppet2DError):
    """Simulator state exploded or became non-finite."""


class ResetError(Puppet2DError):
    """Attempt to reset the simulator to an invalid state."""


class AnchorError(Puppet2DError):
    """Invalid canonical-motion anchor (non-positive scale)."""


class TokenError(Puppet2DError):
    """Token index out of codebook range."""


class SessionError(Puppet2DError):
    """Hierarchical control session entered an unrecoverable state."""


class FitFailedError(Puppet2DError):
    """Pose/camera fit stopped improving; carries the best result so far."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class TrainingAbortError(Puppet2DError):
    """Non-finite quantity encountered during training."""
