from typing import Optional


class AnomalyFusionError(Exception):
    """Base class for every error raised by the fusion framework."""


class UnknownClass(AnomalyFusionError):
    """A class id is not present in the registry it was looked up in."""

    def __init__(self, class_id: str, registry_name: str = "registry"):
        self.class_id = class_id
        self.registry_name = registry_name
        super().__init__(f"Unknown class '{class_id}' in {registry_name}.")


class InvalidBox(AnomalyFusionError):
    pass


class VideoTooShort(AnomalyFusionError):
    def __init__(self, n_frames: int, required: int):
        self.n_frames = n_frames
        self.required = required
        super().__init__(f"Video has {n_frames} frames, at least {required} are required.")


class ShapeMismatch(AnomalyFusionError):
    pass


class InvalidParam(AnomalyFusionError):
    pass


class ParseError(AnomalyFusionError):
    """Malformed input record. `line_number` is 1-based, None when not line oriented."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class LabelGap(AnomalyFusionError):
    pass


class InvalidScenario(AnomalyFusionError):
    pass


class ConfigurationError(AnomalyFusionError):
    pass


class FrameNotFound(AnomalyFusionError):
    pass


class BackendError(AnomalyFusionError):
    """A detector or classifier call failed while processing a window."""

    def __init__(self, message: str, window_id: Optional[int] = None):
        self.window_id = window_id
        prefix = f"window {window_id}: " if window_id is not None else ""
        super().__init__(f"{prefix}{message}")


# Exit-code families used by the command line.
DATA_ERRORS = (
    ParseError,
    UnknownClass,
    LabelGap,
    ShapeMismatch,
    InvalidScenario,
    VideoTooShort,
    BackendError,
    FrameNotFound,
    InvalidBox,
)
USAGE_ERRORS = (ConfigurationError, InvalidParam)
