"""Domain (runtime) value types shared by every service."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.errors import InvalidBox, InvalidParam, ShapeMismatch
from models.registry import ClassRegistry, argmax_label

PROBABILITY_TOLERANCE = 1e-6


class GeneratorMode(str, Enum):
    SLIDING = "sliding"
    SLIDING_OVERLAP = "sliding_overlap"
    DYNAMIC_STEP = "dynamic_step"
    SLIDING_DYNAMIC = "sliding_dynamic"


class RuleFired(str, Enum):
    NONE = "none"
    KEY_OBJECT_FIRE = "key_object_fire"
    KEY_OBJECT_GUNSHOT = "key_object_gunshot"
    FP_VETO_FIRE = "fp_veto_fire"
    FP_VETO_GUNSHOT = "fp_veto_gunshot"


class BoundingBox(BaseModel):
    """
    Axis-aligned box in pixels.

    Parameters
    ----------
    x, y : float
        Left and top coordinates. The box may extend past the frame; it is
        only clipped when rendered.
    w, h : float
        Width and height, strictly positive.
    """

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    w: float
    h: float

    @model_validator(mode="after")
    def _check_geometry(self) -> "BoundingBox":
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise InvalidBox(f"Non-finite box coordinates: {self.as_xywh()}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBox(f"Box width and height must be positive: {self.as_xywh()}")
        return self

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> Tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    def as_xywh(self) -> Tuple[float, float, float, float]:
        return self.x, self.y, self.w, self.h

    def as_xyxy(self) -> Tuple[float, float, float, float]:
        return self.x, self.y, self.x2, self.y2

    def pixel_bounds(self) -> Tuple[int, int, int, int]:
        """Inclusive-exclusive integer pixel span (x0, y0, x1, y1), at least one pixel wide."""
        x0 = int(round(self.x))
        y0 = int(round(self.y))
        x1 = max(x0 + 1, int(round(self.x2)))
        y1 = max(y0 + 1, int(round(self.y2)))
        return x0, y0, x1, y1


class Detection(BaseModel):
    """A classed, scored box on one frame (spatial analysis output)."""

    model_config = ConfigDict(frozen=True)

    box: BoundingBox
    object_class: str
    confidence: float = Field(ge=0.0, le=1.0)
    frame_index: int = Field(ge=0)


class SequenceWindow(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_indices: Tuple[int, ...]
    generator: GeneratorMode
    window_id: int = Field(ge=0)

    @field_validator("frame_indices")
    @classmethod
    def _strictly_increasing(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if len(value) < 2:
            raise ValueError("A window holds at least two frames.")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("Window frame indices must be strictly increasing.")
        if value[0] < 0:
            raise ValueError("Frame indices are non-negative.")
        return value

    def __len__(self) -> int:
        return len(self.frame_indices)


class Verdict(BaseModel):
    """
    Classifier distribution over anomaly classes for one window.

    The distribution is kept in registry order, which is also the tie-break
    order: `predicted` must be the first class holding the maximum.
    Build verdicts with `from_distribution` to get that order.
    """

    model_config = ConfigDict(frozen=True)

    window_id: int = Field(ge=0)
    distribution: Dict[str, float]
    predicted: str

    @model_validator(mode="after")
    def _check_distribution(self) -> "Verdict":
        if not self.distribution:
            raise ValueError("Verdict distribution is empty.")
        if any(p < 0 or not math.isfinite(p) for p in self.distribution.values()):
            raise ValueError("Probabilities must be finite and non-negative.")
        total = sum(self.distribution.values())
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"Probabilities sum to {total}, expected 1.")
        if self.predicted not in self.distribution:
            raise ValueError(f"Predicted class '{self.predicted}' missing from distribution.")
        top = max(self.distribution.values())
        first_top = next(label for label, p in self.distribution.items() if p == top)
        if self.predicted != first_top:
            raise ValueError(
                f"Predicted class '{self.predicted}' is not the argmax '{first_top}' (ties go to the earliest class)."
            )
        return self

    @classmethod
    def from_distribution(cls, window_id: int, distribution: Mapping[str, float], registry: ClassRegistry) -> "Verdict":
        given = {registry.require(k): float(v) for k, v in distribution.items()}
        dist = {class_id: given[class_id] for class_id in registry.ordered() if class_id in given}
        return cls(window_id=window_id, distribution=dist, predicted=argmax_label(dist, registry))

    @classmethod
    def certain(cls, window_id: int, label: str, registry: ClassRegistry) -> "Verdict":
        """All probability mass on `label`, zero elsewhere."""
        dist = {class_id: 0.0 for class_id in registry.ordered()}
        dist[registry.require(label)] = 1.0
        return cls.from_distribution(window_id, dist, registry)


class Alert(BaseModel):
    """The corrected final label of a window, with the rule that produced it."""

    model_config = ConfigDict(frozen=True)

    window_id: int = Field(ge=0)
    final_class: str
    original_class: str
    rule_fired: RuleFired = RuleFired.NONE
    supporting_detections: Tuple[Detection, ...] = ()

    @model_validator(mode="after")
    def _rule_iff_changed(self) -> "Alert":
        changed = self.final_class != self.original_class
        if (self.rule_fired is RuleFired.NONE) == changed:
            raise ValueError(
                f"rule_fired={self.rule_fired.value} inconsistent with "
                f"{self.original_class} -> {self.final_class}"
            )
        return self


@dataclass(frozen=True)
class Frame:
    """
    One decoded image. `pixels` is a read-only uint8 array of shape
    (height, width, channels) with channels in {1, 3}, RGB order.
    """

    index: int
    pixels: np.ndarray
    timestamp_ms: Optional[float] = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim == 2:
            pixels = pixels[:, :, np.newaxis]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
            raise ShapeMismatch(f"Frame pixels must be HxWx1 or HxWx3, got {pixels.shape}.")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ShapeMismatch("Frame dimensions must be at least 1x1.")
        if pixels.dtype != np.uint8:
            raise ShapeMismatch(f"Frame pixels must be uint8, got {pixels.dtype}.")
        if self.index < 0:
            raise InvalidParam("Frame index must be non-negative.")
        pixels = np.ascontiguousarray(pixels).copy()
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return int(self.pixels.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.height, self.width, self.channels

    def with_pixels(self, pixels: np.ndarray) -> "Frame":
        return Frame(index=self.index, pixels=pixels, timestamp_ms=self.timestamp_ms)

    def writable_copy(self) -> np.ndarray:
        return np.array(self.pixels, copy=True)


@dataclass(frozen=True)
class Heatmap:
    """Per-frame scalar attention field, row-major (height, width)."""

    values: np.ndarray
    frame_index: Optional[int] = None
    degenerate: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeMismatch(f"Heatmap values must be a non-empty 2-D field, got {values.shape}.")
        if not np.all(np.isfinite(values)):
            raise InvalidParam("Heatmap values must be finite.")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


class Contour(BaseModel):
    """Closed polyline of (x, y) pixel coordinates; first point repeated last."""

    model_config = ConfigDict(frozen=True)

    points: Tuple[Tuple[float, float], ...]
    level: float

    @field_validator("points")
    @classmethod
    def _closed(cls, value):
        if len(value) < 4:
            raise ValueError("A contour needs at least 3 distinct vertices.")
        if tuple(value[0]) != tuple(value[-1]):
            raise ValueError("A contour must be closed (first point == last point).")
        return value
