"""Exception and warning types shared across the package."""


class SimStereoError(Exception):
    """Base class for all errors raised by simstereo."""


class DegenerateDisparity(SimStereoError, ValueError):
    pass


class BehindCamera(SimStereoError, ValueError):
    pass


class InvalidCovariance(SimStereoError, ValueError):
    pass


class ShapeError(SimStereoError, ValueError):
    pass


class EmptyTarget(SimStereoError, ValueError):
    pass


class LabelError(SimStereoError, ValueError):
    pass


class PlacementError(SimStereoError, RuntimeError):
    pass


class UndefinedMetric(SimStereoError, ValueError):
    pass


class Ungraspable(SimStereoError, ValueError):
    pass


class PlaneFitError(SimStereoError, ValueError):
    pass


class NoIntersection(SimStereoError, ValueError):
    pass


class IncompleteState(SimStereoError, ValueError):
    """Raised when the visible keypoints do not identify a fold state.

    ``missing`` holds the keypoint class names that would be needed.
    """

    def __init__(self, missing):
        self.missing = frozenset(missing)
        super().__init__(f"missing keypoint classes: {sorted(self.missing)}")


class ConfigError(SimStereoError, ValueError):
    pass


class DatasetIOError(SimStereoError, OSError):
    def __init__(self, index, message):
        self.index = index
        super().__init__(f"scene {index}: {message}")


class SkippedObject(UserWarning):
    """Emitted when an object cannot be encoded into head targets."""


class DegenerateBox(UserWarning):
    """Emitted when a heatmap peak yields an ill-conditioned box solve."""


class NothingToGrasp(SimStereoError, ValueError):
    """No detection passes the confidence threshold."""
