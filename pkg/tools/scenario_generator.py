"""
Synthetic ground-truthed streams.

Frames are flat-background images with filled rectangles moving at constant
speed, bouncing off the frame borders. Ground-truth boxes are the exact
rectangle positions. Event intervals are inclusive on both ends.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.domain import BoundingBox, Detection, Frame, SequenceWindow, Verdict
from models.errors import InvalidScenario
from models.registry import (
    FIRE,
    FLAME,
    NORMAL,
    PERSON,
    ClassRegistry,
    default_anomaly_registry,
    default_object_registry,
)


class ScenarioObject(BaseModel):
    model_config = ConfigDict(frozen=True)

    object_class: str
    w: int = Field(gt=0)
    h: int = Field(gt=0)
    x: int = 0
    y: int = 0
    dx: int = 0
    dy: int = 0
    intensity: int = Field(default=255, ge=0, le=255)


class ScenarioEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    start: int = Field(ge=0)
    end: int = Field(ge=0)
    objects: Tuple[ScenarioObject, ...] = ()

    @model_validator(mode="after")
    def _ordered(self) -> "ScenarioEvent":
        if self.end < self.start:
            raise ValueError(f"event ends ({self.end}) before it starts ({self.start})")
        return self

    def covers(self, frame_index: int) -> bool:
        return self.start <= frame_index <= self.end


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 7
    n_frames: int = Field(default=600, ge=1)
    width: int = Field(default=160, ge=8)
    height: int = Field(default=120, ge=8)
    channels: int = 3
    events: Tuple[ScenarioEvent, ...] = ()


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    frames: Tuple[Frame, ...]
    gt_detections: Tuple[Detection, ...]
    frame_labels: Tuple[str, ...]

    def detections_by_frame(self) -> Dict[int, List[Detection]]:
        grouped: Dict[int, List[Detection]] = {}
        for det in self.gt_detections:
            grouped.setdefault(det.frame_index, []).append(det)
        return grouped

    def window_label(self, window: SequenceWindow) -> str:
        return label_window(window, self.frame_labels)

    def window_labels(self, windows: Sequence[SequenceWindow]) -> List[str]:
        return [self.window_label(w) for w in windows]


def label_window(window: SequenceWindow, frame_labels: Sequence[str]) -> str:
    """
    An event label wins a window when at least half of the window's frames
    fall inside that label's intervals. Two qualifying labels: larger
    coverage first, then the one appearing first in the window.
    """
    coverage: Dict[str, int] = {}
    first_seen: Dict[str, int] = {}
    for position, frame_index in enumerate(window.frame_indices):
        label = frame_labels[frame_index] if frame_index < len(frame_labels) else NORMAL
        if label == NORMAL:
            continue
        coverage[label] = coverage.get(label, 0) + 1
        first_seen.setdefault(label, position)

    qualifying = [label for label, count in coverage.items() if 2 * count >= len(window)]
    if not qualifying:
        return NORMAL
    return min(qualifying, key=lambda label: (-coverage[label], first_seen[label]))


def _bounce(start: int, velocity: int, steps: int, limit: int) -> int:
    """Position after `steps` moves inside [0, limit], reflecting at both ends."""
    if limit <= 0:
        return 0
    period = 2 * limit
    position = (start + velocity * steps) % period
    return position if position <= limit else period - position


def _validate(spec: ScenarioSpec, anomaly: ClassRegistry, objects: ClassRegistry) -> None:
    for event in spec.events:
        anomaly.require(event.label)
        if event.end >= spec.n_frames:
            raise InvalidScenario(
                f"event {event.label} [{event.start}, {event.end}] lies outside [0, {spec.n_frames})"
            )
        for obj in event.objects:
            objects.require(obj.object_class)
            if obj.w > spec.width or obj.h > spec.height:
                raise InvalidScenario(f"{obj.object_class} object {obj.w}x{obj.h} does not fit the frame")

    ordered = sorted(spec.events, key=lambda e: e.start)
    for i, first in enumerate(ordered):
        for second in ordered[i + 1:]:
            if second.start > first.end:
                break
            if first.label != second.label:
                raise InvalidScenario(
                    f"events {first.label} [{first.start}, {first.end}] and "
                    f"{second.label} [{second.start}, {second.end}] overlap"
                )


def object_box(obj: ScenarioObject, event: ScenarioEvent, frame_index: int, width: int, height: int) -> BoundingBox:
    steps = frame_index - event.start
    x = _bounce(obj.x, obj.dx, steps, width - obj.w)
    y = _bounce(obj.y, obj.dy, steps, height - obj.h)
    return BoundingBox(x=x, y=y, w=obj.w, h=obj.h)


def generate_scenario(
    spec: ScenarioSpec,
    anomaly_registry: Optional[ClassRegistry] = None,
    object_registry: Optional[ClassRegistry] = None,
) -> Scenario:
    """
    Renders the stream described by `spec`. Identical specs (seed included)
    give bit-identical frames and ground truth.

    Raises:
        InvalidScenario: an event outside the stream, an object larger than
            the frame, or two overlapping events with different labels.
    """
    anomaly_registry = anomaly_registry or default_anomaly_registry()
    object_registry = object_registry or default_object_registry()
    _validate(spec, anomaly_registry, object_registry)

    rng = np.random.default_rng(spec.seed)
    background = int(rng.integers(16, 64))

    frame_labels = [NORMAL] * spec.n_frames
    for event in spec.events:
        for index in range(event.start, event.end + 1):
            frame_labels[index] = anomaly_registry.require(event.label)

    frames: List[Frame] = []
    gt: List[Detection] = []
    for index in range(spec.n_frames):
        canvas = np.full((spec.height, spec.width, spec.channels), background, dtype=np.uint8)
        for event in spec.events:
            if not event.covers(index):
                continue
            for obj in event.objects:
                box = object_box(obj, event, index, spec.width, spec.height)
                x0, y0, x1, y1 = box.pixel_bounds()
                color = (obj.intensity,) * spec.channels
                cv2.rectangle(canvas, (x0, y0), (x1 - 1, y1 - 1), color, thickness=cv2.FILLED)
                gt.append(Detection(
                    box=box,
                    object_class=object_registry.require(obj.object_class),
                    confidence=1.0,
                    frame_index=index,
                ))
        frames.append(Frame(index=index, pixels=canvas))

    return Scenario(spec=spec, frames=tuple(frames), gt_detections=tuple(gt), frame_labels=tuple(frame_labels))


def bundled_scenario(seed: int = 7, n_frames: int = 600) -> Scenario:
    """One Fire event over the middle third: a drifting flame next to a person."""
    fire_start, fire_end = n_frames // 3, 2 * n_frames // 3 - 1
    fire = ScenarioEvent(
        label=FIRE,
        start=fire_start,
        end=fire_end,
        objects=(
            ScenarioObject(object_class=FLAME, w=24, h=32, x=30, y=40, dx=1, intensity=230),
            ScenarioObject(object_class=PERSON, w=20, h=50, x=100, y=40, dx=-1, intensity=150),
        ),
    )
    return generate_scenario(ScenarioSpec(seed=seed, n_frames=n_frames, events=(fire,)))


def scripted_verdicts(
    scenario: Scenario,
    windows: Sequence[SequenceWindow],
    missed: Sequence[int] = (),
    confidence: float = 0.8,
    registry: Optional[ClassRegistry] = None,
) -> List[Verdict]:
    """
    Verdicts that follow the ground-truth window labels, except for window ids
    in `missed`, which are predicted Normal (a classifier false negative).
    `confidence` goes to the predicted class, the rest is spread evenly.
    """
    registry = registry or default_anomaly_registry()
    missed_ids = set(missed)
    verdicts: List[Verdict] = []
    for window in windows:
        predicted = NORMAL if window.window_id in missed_ids else scenario.window_label(window)
        verdicts.append(Verdict.from_distribution(window.window_id, _peaked(predicted, confidence, registry), registry))
    return verdicts


def _peaked(label: str, confidence: float, registry: ClassRegistry) -> Mapping[str, float]:
    others = [class_id for class_id in registry.ordered() if class_id != label]
    rest = (1.0 - confidence) / len(others) if others else 0.0
    dist = {class_id: rest for class_id in others}
    dist[label] = confidence if others else 1.0
    return dist
