"""Exception types shared across the pipeline."""


class DynavoError(Exception):
    """Base class for all errors raised by this package."""


class ImageSizeError(DynavoError, ValueError):
    pass


class PatchOutOfBounds(DynavoError, ValueError):
    pass


class EstimationFailed(DynavoError):
    """A robust model fit could not produce a non-degenerate solution."""


class DegenerateGeometry(DynavoError, ValueError):
    pass


class InvalidDepth(DynavoError, ValueError):
    pass


class TrackingLost(DynavoError):
    """Raised when too few matches or inliers survive pose estimation."""

    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class AssociationError(DynavoError):
    pass


class SettingsError(DynavoError, ValueError):
    pass


class DatasetError(DynavoError):
    pass


class ScriptError(DynavoError, ValueError):
    """Invalid synthetic scene script."""
