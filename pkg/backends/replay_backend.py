"""
Replay-from-file inference backends.

A replay script is a JSONL file mixing two record kinds:

    {"v":1,"frame":int,"class":str,"conf":float,"box":[x,y,w,h]}
    {"v":1,"window":int,"dist":{"fight":p,...}}

Detection records may repeat a frame (order is preserved); verdict records
are unique per window.
"""

import json
import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from models.domain import BoundingBox, Detection, Frame, SequenceWindow, Verdict
from models.errors import InvalidBox, ParseError
from models.registry import NORMAL, ClassRegistry, default_anomaly_registry, default_object_registry

logger = logging.getLogger("ReplayBackend")

PROTOCOL_VERSION = 1


class DetectionRecord(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="ignore")

    v: Literal[1]
    frame: int = Field(ge=0)
    object_class: str = Field(alias="class")
    conf: Optional[float] = None
    box: Tuple[float, float, float, float]


class VerdictRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    v: Literal[1]
    window: int = Field(ge=0)
    dist: Dict[str, float]


@dataclass(frozen=True)
class ReplayScript:
    """Immutable per-frame detections and per-window verdicts."""

    detections: Mapping[int, Tuple[Detection, ...]] = field(default_factory=lambda: MappingProxyType({}))
    verdicts: Mapping[int, Verdict] = field(default_factory=lambda: MappingProxyType({}))

    @property
    def is_empty(self) -> bool:
        return not self.detections and not self.verdicts

    def all_detections(self) -> List[Detection]:
        return [det for frame_index in sorted(self.detections) for det in self.detections[frame_index]]


def record_to_detection(
    record: DetectionRecord,
    registry: ClassRegistry,
    line_number: Optional[int] = None,
    ignore_confidence: bool = False,
) -> Detection:
    object_class = registry.require(record.object_class)
    if ignore_confidence:
        confidence = 1.0
    else:
        if record.conf is None:
            raise ParseError("detection record has no 'conf'", line_number)
        if not 0.0 <= record.conf <= 1.0:
            raise ParseError(f"confidence {record.conf} outside [0, 1]", line_number)
        confidence = record.conf
    x, y, w, h = record.box
    try:
        box = BoundingBox(x=x, y=y, w=w, h=h)
    except InvalidBox as e:
        raise ParseError(str(e), line_number) from e
    return Detection(box=box, object_class=object_class, confidence=confidence, frame_index=record.frame)


def _iter_lines(path: str) -> Iterable[Tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            stripped = line.strip()
            if stripped:
                yield line_number, stripped


def _decode(line: str, line_number: int) -> dict:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line_number) from e
    if not isinstance(payload, dict):
        raise ParseError("record must be a JSON object", line_number)
    if payload.get("v") != PROTOCOL_VERSION:
        raise ParseError(f"unsupported record version {payload.get('v')!r}", line_number)
    return payload


def load_replay(
    path: str,
    anomaly_registry: Optional[ClassRegistry] = None,
    object_registry: Optional[ClassRegistry] = None,
) -> ReplayScript:
    """
    Parses a replay JSONL file.

    Raises:
        ParseError: malformed line (carries the 1-based line number), a
            confidence outside [0, 1], a distribution not summing to 1, or a
            window scripted twice.
        UnknownClass: a class id missing from its registry.
    """
    anomaly_registry = anomaly_registry or default_anomaly_registry()
    object_registry = object_registry or default_object_registry()
    detections: Dict[int, List[Detection]] = {}
    verdicts: Dict[int, Verdict] = {}

    for line_number, line in _iter_lines(path):
        payload = _decode(line, line_number)
        try:
            if "window" in payload:
                record = VerdictRecord.model_validate(payload)
                if record.window in verdicts:
                    raise ParseError(f"window {record.window} scripted twice", line_number)
                verdicts[record.window] = Verdict.from_distribution(record.window, record.dist, anomaly_registry)
            else:
                record = DetectionRecord.model_validate(payload)
                det = record_to_detection(record, object_registry, line_number)
                detections.setdefault(det.frame_index, []).append(det)
        except ValidationError as e:
            raise ParseError(f"invalid record: {e.errors()[0]['msg']}", line_number) from e

    logger.debug("Loaded replay script %s: %d frames, %d windows", path, len(detections), len(verdicts))
    return ReplayScript(
        detections=MappingProxyType({k: tuple(v) for k, v in detections.items()}),
        verdicts=MappingProxyType(dict(verdicts)),
    )


def load_detections(
    path: str,
    object_registry: Optional[ClassRegistry] = None,
    ignore_confidence: bool = False,
) -> List[Detection]:
    """Reads a detection-only JSONL file (predictions, or ground truth with ignore_confidence)."""
    object_registry = object_registry or default_object_registry()
    out: List[Detection] = []
    for line_number, line in _iter_lines(path):
        payload = _decode(line, line_number)
        try:
            record = DetectionRecord.model_validate(payload)
        except ValidationError as e:
            raise ParseError(f"invalid detection record: {e.errors()[0]['msg']}", line_number) from e
        out.append(record_to_detection(record, object_registry, line_number, ignore_confidence))
    return out


def detection_to_record(det: Detection) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "frame": det.frame_index,
        "class": det.object_class,
        "conf": det.confidence,
        "box": list(det.box.as_xywh()),
    }


def verdict_to_record(verdict: Verdict) -> dict:
    return {"v": PROTOCOL_VERSION, "window": verdict.window_id, "dist": dict(verdict.distribution)}


def write_replay(path: str, detections: Sequence[Detection] = (), verdicts: Sequence[Verdict] = ()) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for det in detections:
            handle.write(json.dumps(detection_to_record(det)) + "\n")
        for verdict in verdicts:
            handle.write(json.dumps(verdict_to_record(verdict)) + "\n")


def replay_detect(script: ReplayScript, frame: Frame) -> List[Detection]:
    """Scripted detections for frame.index, in file order; [] when none are scripted."""
    return list(script.detections.get(frame.index, ()))


def replay_classify(
    script: ReplayScript,
    window: SequenceWindow,
    fallback: str = NORMAL,
    registry: Optional[ClassRegistry] = None,
) -> Verdict:
    """Scripted verdict for window.window_id, else all mass on `fallback`."""
    scripted = script.verdicts.get(window.window_id)
    if scripted is not None:
        return scripted
    return Verdict.certain(window.window_id, fallback, registry or default_anomaly_registry())


class ReplayDetector:
    thread_safe = True

    def __init__(self, script: ReplayScript):
        self.script = script

    def detect(self, frame: Frame) -> List[Detection]:
        return replay_detect(self.script, frame)


class ReplayClassifier:
    thread_safe = True

    def __init__(self, script: ReplayScript, fallback: str = NORMAL, registry: Optional[ClassRegistry] = None):
        self.script = script
        self.registry = registry or default_anomaly_registry()
        self.fallback = self.registry.require(fallback)

    def classify(self, frames: Sequence[Frame], window: SequenceWindow) -> Verdict:
        return replay_classify(self.script, window, self.fallback, self.registry)
