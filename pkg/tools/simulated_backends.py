"""
Mock detector/classifier backends for deterministic runs and timing tests.

Mirrors the mock tool functions used by the test profile: every mock honours
the same contract as a real backend.
"""

import threading
import time
from types import MappingProxyType
from typing import Iterable, List, Optional, Sequence, Tuple

from backends.replay_backend import ReplayClassifier, ReplayDetector, ReplayScript
from models.domain import Detection, Frame, SequenceWindow, Verdict
from models.registry import NORMAL, ClassRegistry, default_anomaly_registry
from tools.scenario_generator import Scenario, scripted_verdicts


class NullDetector:
    """Never detects anything."""

    thread_safe = True

    def detect(self, frame: Frame) -> List[Detection]:
        return []


class ConstantClassifier:
    """Puts all mass on one label for every window."""

    thread_safe = True

    def __init__(self, label: str = NORMAL, registry: Optional[ClassRegistry] = None):
        self.registry = registry or default_anomaly_registry()
        self.label = self.registry.require(label)

    def classify(self, frames: Sequence[Frame], window: SequenceWindow) -> Verdict:
        return Verdict.certain(window.window_id, self.label, self.registry)


class SleepingDetector:
    """Delegates to `inner` after sleeping `delay_s` per frame."""

    thread_safe = True

    def __init__(self, delay_s: float, inner=None):
        self.delay_s = delay_s
        self.inner = inner or NullDetector()

    def detect(self, frame: Frame) -> List[Detection]:
        time.sleep(self.delay_s)
        return self.inner.detect(frame)


class SleepingClassifier:
    """Delegates to `inner` after sleeping `delay_s` per window."""

    thread_safe = True

    def __init__(self, delay_s: float, inner=None):
        self.delay_s = delay_s
        self.inner = inner or ConstantClassifier()

    def classify(self, frames: Sequence[Frame], window: SequenceWindow) -> Verdict:
        time.sleep(self.delay_s)
        return self.inner.classify(frames, window)


class RecordingClassifier:
    """Keeps a copy of every frame sequence it is asked to classify."""

    thread_safe = True

    def __init__(self, inner=None):
        self.inner = inner or ConstantClassifier()
        self.calls: List[Tuple[SequenceWindow, Tuple[Frame, ...]]] = []
        self._lock = threading.Lock()

    def classify(self, frames: Sequence[Frame], window: SequenceWindow) -> Verdict:
        with self._lock:
            self.calls.append((window, tuple(frames)))
        return self.inner.classify(frames, window)


def scenario_script(
    scenario: Scenario,
    windows: Sequence[SequenceWindow],
    missed: Iterable[int] = (),
    drop_classes: Iterable[str] = (),
) -> ReplayScript:
    """
    A replay script whose detections are the scenario's ground truth (minus
    `drop_classes`) and whose verdicts follow the window labels.
    """
    dropped = set(drop_classes)
    by_frame = {
        index: tuple(d for d in dets if d.object_class not in dropped)
        for index, dets in scenario.detections_by_frame().items()
    }
    verdicts = {v.window_id: v for v in scripted_verdicts(scenario, windows, missed=tuple(missed))}
    return ReplayScript(
        detections=MappingProxyType({k: v for k, v in by_frame.items() if v}),
        verdicts=MappingProxyType(verdicts),
    )


def scenario_backends(
    scenario: Scenario,
    windows: Sequence[SequenceWindow],
    missed: Iterable[int] = (),
    drop_classes: Iterable[str] = (),
) -> Tuple[ReplayDetector, ReplayClassifier]:
    script = scenario_script(scenario, windows, missed, drop_classes)
    return ReplayDetector(script), ReplayClassifier(script)
