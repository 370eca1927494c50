from typing import List, Protocol, Sequence, runtime_checkable

from models.domain import Detection, Frame, SequenceWindow, Verdict


@runtime_checkable
class Detector(Protocol):
    """
    Spatial analysis boundary. Returned detections carry the queried
    frame's index and confidences in [0, 1].

    Implementations set `thread_safe = False` when calls must be serialized.
    """

    thread_safe: bool

    def detect(self, frame: Frame) -> List[Detection]:
        ...


@runtime_checkable
class Classifier(Protocol):
    """
    Temporal analysis boundary. Receives exactly `sequence_length` frames of
    one window and returns a distribution summing to 1.
    """

    thread_safe: bool

    def classify(self, frames: Sequence[Frame], window: SequenceWindow) -> Verdict:
        ...
