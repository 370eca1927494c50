"""
Correction rules and the serial / parallel orchestration.

Parallel mode runs the detector and the classifier independently on each
window and lets the key-object rules correct the classifier verdict. Serial
mode feeds the detector output (drawn boxes or masks) into the classifier
and applies no rule.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from backends.contracts import Classifier, Detector
from models.config_models import (
    ClassifierInput,
    ClassMode,
    FusionConfig,
    IouGate,
    MaskBackground,
    PipelineMode,
    RuleVariant,
    SerialPreprocess,
)
from models.domain import Alert, Detection, Frame, RuleFired, SequenceWindow, Verdict
from models.errors import AnomalyFusionError, BackendError, ConfigurationError, FrameNotFound, InvalidParam
from models.registry import (
    FIRE,
    FIREARM,
    FLAME,
    GUNSHOT,
    NORMAL,
    PERSON,
    ClassRegistry,
    default_anomaly_registry,
    default_object_registry,
    registry_binary_collapse,
)
from services.geometry import diou, iou, suppress, touches
from services.logging_service import LoggingService
from services.preprocess import apply_box_mask, augment, draw_boxes, frame_difference, parse_augment, resize

# Rule provenance per anomaly reachable through a key object: (correction, FP veto).
RULES_BY_ANOMALY: Mapping[str, Tuple[RuleFired, RuleFired]] = MappingProxyType({
    FIRE: (RuleFired.KEY_OBJECT_FIRE, RuleFired.FP_VETO_FIRE),
    GUNSHOT: (RuleFired.KEY_OBJECT_GUNSHOT, RuleFired.FP_VETO_GUNSHOT),
})

FrameSource = Union[Sequence[Frame], Mapping[int, Frame]]


@dataclass(frozen=True)
class KeyObjectDictionary:
    """
    Links key objects to the anomaly they reveal.

    `auxiliary` objects never map to an anomaly; `needs_auxiliary` lists the
    key objects that only count when they overlap an auxiliary object (a
    firearm must be held by a person). `precedence` is the order in which
    the corrections are tried when several key objects qualify.
    """

    mapping: Mapping[str, str] = field(default_factory=lambda: MappingProxyType({FLAME: FIRE, FIREARM: GUNSHOT}))
    auxiliary: Tuple[str, ...] = (PERSON,)
    needs_auxiliary: Tuple[str, ...] = (FIREARM,)
    precedence: Tuple[str, ...] = (FLAME, FIREARM)

    def validate(self, anomaly_registry: ClassRegistry, object_registry: ClassRegistry) -> "KeyObjectDictionary":
        """
        Raises:
            ConfigurationError: an unregistered object or anomaly, an
                auxiliary object mapped to an anomaly, an anomaly with no
                rule provenance, or a precedence list that does not name
                every key object exactly once.
        """
        try:
            for obj, anomaly in self.mapping.items():
                object_registry.require(obj)
                anomaly_registry.require(anomaly)
            for obj in self.auxiliary:
                object_registry.require(obj)
        except AnomalyFusionError as e:
            raise ConfigurationError(f"Key-object dictionary references an unknown class: {e}") from e

        for obj, anomaly in self.mapping.items():
            if obj in self.auxiliary:
                raise ConfigurationError(f"Auxiliary object '{obj}' cannot map to an anomaly.")
            if anomaly == NORMAL or anomaly not in RULES_BY_ANOMALY:
                raise ConfigurationError(f"No correction rule exists for anomaly '{anomaly}'.")
        if sorted(self.precedence) != sorted(self.mapping):
            raise ConfigurationError(
                f"Precedence {list(self.precedence)} must list every key object once: {sorted(self.mapping)}"
            )
        return self

    def key_object_for(self, anomaly: str) -> Optional[str]:
        for obj in self.precedence:
            if self.mapping[obj] == anomaly:
                return obj
        return None


def default_key_objects() -> KeyObjectDictionary:
    return KeyObjectDictionary().validate(default_anomaly_registry(), default_object_registry())


def gate_passes(key_box, auxiliary_box, cfg: FusionConfig) -> bool:
    """Overlap test between a key object and an auxiliary object (firearm and person)."""
    if cfg.iou_gate is IouGate.DIOU:
        return diou(key_box, auxiliary_box) > 0.0
    if iou(key_box, auxiliary_box) > 0.0:
        return True
    return cfg.touch_counts and touches(key_box, auxiliary_box)


class _Evidence:
    """Qualifying detections of one window, indexed for the rules."""

    def __init__(self, dets: Sequence[Detection], cfg: FusionConfig, key_objects: KeyObjectDictionary):
        self.cfg = cfg
        self.key_objects = key_objects
        self.by_class: Dict[str, List[Detection]] = {}
        for det in dets:
            if det.confidence >= cfg.confidence_threshold:
                self.by_class.setdefault(det.object_class, []).append(det)

    def present(self, obj: str) -> List[Detection]:
        return list(self.by_class.get(obj, ()))

    def supporting(self, obj: str) -> List[Detection]:
        """Detections that make `obj` count, gate included."""
        found = self.present(obj)
        if not found or obj not in self.key_objects.needs_auxiliary or not self.cfg.require_person_for_firearm:
            return found
        support: List[Detection] = []
        for aux_class in self.key_objects.auxiliary:
            for key_det in found:
                for aux_det in self.by_class.get(aux_class, ()):
                    if gate_passes(key_det.box, aux_det.box, self.cfg):
                        for det in (key_det, aux_det):
                            if det not in support:
                                support.append(det)
        return support


def correct_verdict(
    verdict: Verdict,
    dets: Sequence[Detection],
    cfg: FusionConfig,
    key_objects: Optional[KeyObjectDictionary] = None,
) -> Alert:
    """
    Applies the correction rules to one window verdict.

    A non-Normal prediction is kept (under the FP variant it is first vetoed
    to Normal when its key object is absent). A Normal prediction becomes the
    anomaly of the first key object, in precedence order, with qualifying
    evidence.
    """
    key_objects = key_objects or default_key_objects()
    evidence = _Evidence(dets, cfg, key_objects)
    predicted = verdict.predicted

    def alert(final: str, rule: RuleFired, support: Sequence[Detection] = ()) -> Alert:
        return Alert(
            window_id=verdict.window_id,
            final_class=final,
            original_class=predicted,
            rule_fired=rule,
            supporting_detections=tuple(support),
        )

    if predicted != NORMAL:
        if cfg.rule_variant is RuleVariant.REDUCE_FALSE_POSITIVES:
            key_obj = key_objects.key_object_for(predicted)
            if key_obj is not None and not evidence.present(key_obj):
                return alert(NORMAL, RULES_BY_ANOMALY[predicted][1])
        return alert(predicted, RuleFired.NONE)

    for obj in key_objects.precedence:
        support = evidence.supporting(obj)
        if support:
            anomaly = key_objects.mapping[obj]
            return alert(anomaly, RULES_BY_ANOMALY[anomaly][0], support)
    return alert(NORMAL, RuleFired.NONE)


def _frame_lookup(frames: FrameSource) -> Callable[[int], Frame]:
    if isinstance(frames, Mapping):
        table = frames
    else:
        table = {frame.index: frame for frame in frames}

    def get(index: int) -> Frame:
        try:
            return table[index]
        except KeyError:
            raise FrameNotFound(f"Frame {index} is not part of the input stream.") from None

    return get


def _check_window(window: SequenceWindow, cfg: FusionConfig) -> None:
    if len(window) != cfg.sequence_length:
        raise InvalidParam(
            f"Window {window.window_id} holds {len(window)} frames; the classifier expects {cfg.sequence_length}."
        )


def _call_backend(window_id: int, fn, *args):
    try:
        return fn(*args)
    except BackendError as e:
        if e.window_id is not None:
            raise
        raise BackendError(str(e), window_id) from e
    except AnomalyFusionError:
        raise
    except Exception as e:
        raise BackendError(f"{type(e).__name__}: {e}", window_id) from e


def prepare_classifier_input(frames: Sequence[Frame], cfg: FusionConfig) -> List[Frame]:
    """
    Frames of one window as the classifier receives them: each frame goes
    through the configured augmentations and the square resize. Under
    ClassifierInput.DIFFERENCE every frame is then replaced by its absolute
    difference to the previous frame of the window; the first frame is
    differenced with itself (all zero) so the window keeps its length.
    """
    ops = [parse_augment(text) for text in cfg.augment]
    prepared: List[Frame] = []
    for frame in frames:
        for op in ops:
            frame = augment(frame, op)
        prepared.append(resize(frame, cfg.image_size))
    if cfg.classifier_input is ClassifierInput.DIFFERENCE and prepared:
        previous = [prepared[0]] + prepared[:-1]
        prepared = [frame_difference(prev, cur) for prev, cur in zip(previous, prepared)]
    return prepared


def _detect_all(detector: Detector, frames: Sequence[Frame]) -> List[Detection]:
    pooled: List[Detection] = []
    for frame in frames:
        pooled.extend(detector.detect(frame))
    return pooled


def run_parallel(
    frames: FrameSource,
    windows: Sequence[SequenceWindow],
    detector: Detector,
    classifier: Classifier,
    cfg: FusionConfig,
    logger: Optional[LoggingService] = None,
    key_objects: Optional[KeyObjectDictionary] = None,
) -> List[Alert]:
    """
    Parallel architecture. Per window the classifier sees the raw frames
    (prepared by `prepare_classifier_input`) while the detector sees every
    `frame_skip`-th frame; detections are pooled over the window, suppressed
    with the configured NMS kind, then fed to `correct_verdict`.
    Alerts come back in window order.
    """
    key_objects = key_objects or default_key_objects()
    get_frame = _frame_lookup(frames)
    shared_backend = detector is classifier and not (detector.thread_safe and classifier.thread_safe)
    concurrent = cfg.concurrent_backends and not shared_backend
    alerts: List[Alert] = []

    executor = ThreadPoolExecutor(max_workers=2, thread_name_prefix="fusion") if concurrent else None
    try:
        for window in windows:
            _check_window(window, cfg)
            window_frames = [get_frame(i) for i in window.frame_indices]
            classifier_input = prepare_classifier_input(window_frames, cfg)
            sampled = window_frames[::cfg.frame_skip]

            if executor is not None:
                detect_future = executor.submit(_call_backend, window.window_id, _detect_all, detector, sampled)
                classify_future = executor.submit(
                    _call_backend, window.window_id, classifier.classify, classifier_input, window
                )
                raw_dets = detect_future.result()
                verdict = classify_future.result()
            else:
                raw_dets = _call_backend(window.window_id, _detect_all, detector, sampled)
                verdict = _call_backend(window.window_id, classifier.classify, classifier_input, window)

            pooled = suppress(raw_dets, cfg.confidence_threshold, cfg.nms_overlap, cfg.nms_kind, cfg.diou_decay)
            alert = correct_verdict(verdict, pooled, cfg, key_objects)
            alerts.append(alert)
            if logger:
                logger.debug(
                    "Window corrected.",
                    context={
                        "window_id": window.window_id,
                        "sampled_frames": len(sampled),
                        "detections": len(pooled),
                        "predicted": verdict.predicted,
                        "final": alert.final_class,
                        "rule": alert.rule_fired.value,
                    },
                )
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return alerts


def _serial_transform(frame: Frame, dets: Sequence[Detection], preproc: SerialPreprocess) -> Frame:
    if preproc is SerialPreprocess.DRAW_BOXES:
        return draw_boxes(frame, dets)
    if preproc is SerialPreprocess.MASK_BLACK:
        return apply_box_mask(frame, dets, MaskBackground.BLACK)
    return apply_box_mask(frame, dets, MaskBackground.ORIGINAL)


def run_serial(
    frames: FrameSource,
    windows: Sequence[SequenceWindow],
    detector: Detector,
    classifier: Classifier,
    cfg: FusionConfig,
    preproc: Optional[SerialPreprocess] = None,
    logger: Optional[LoggingService] = None,
) -> List[Alert]:
    """
    Serial architecture: detect on every frame, burn the detections into the
    frame (boxes or masks), prepare the classifier input, then classify. No correction rule runs,
    so each alert is the classifier verdict.
    """
    preproc = SerialPreprocess(preproc or cfg.serial_preprocess)
    get_frame = _frame_lookup(frames)
    alerts: List[Alert] = []

    for window in windows:
        _check_window(window, cfg)
        prepared: List[Frame] = []
        window_dets: List[Detection] = []
        for index in window.frame_indices:
            frame = get_frame(index)
            dets = suppress(
                _call_backend(window.window_id, detector.detect, frame),
                cfg.confidence_threshold,
                cfg.nms_overlap,
                cfg.nms_kind,
                cfg.diou_decay,
            )
            window_dets.extend(dets)
            prepared.append(_serial_transform(frame, dets, preproc))

        classifier_input = prepare_classifier_input(prepared, cfg)
        verdict = _call_backend(window.window_id, classifier.classify, classifier_input, window)
        alerts.append(Alert(
            window_id=window.window_id,
            final_class=verdict.predicted,
            original_class=verdict.predicted,
            rule_fired=RuleFired.NONE,
            supporting_detections=tuple(window_dets),
        ))
        if logger:
            logger.debug(
                "Window classified.",
                context={"window_id": window.window_id, "preprocess": preproc.value,
                         "detections": len(window_dets), "predicted": verdict.predicted},
            )
    return alerts


def binary_alerts(alerts: Sequence[Alert], cfg: FusionConfig) -> List[Alert]:
    """Collapses final and original labels onto {abnormal, normal} in binary class mode."""
    if cfg.class_mode is not ClassMode.BINARY:
        return list(alerts)
    return [
        Alert(
            window_id=a.window_id,
            final_class=registry_binary_collapse(a.final_class),
            original_class=registry_binary_collapse(a.original_class),
            rule_fired=a.rule_fired,
            supporting_detections=a.supporting_detections,
        )
        for a in alerts
    ]


def run_pipeline(
    frames: FrameSource,
    windows: Sequence[SequenceWindow],
    detector: Detector,
    classifier: Classifier,
    cfg: FusionConfig,
    logger: Optional[LoggingService] = None,
) -> List[Alert]:
    """Dispatches on cfg.mode and applies the binary collapse."""
    if cfg.mode is PipelineMode.SERIAL:
        alerts = run_serial(frames, windows, detector, classifier, cfg, logger=logger)
    else:
        alerts = run_parallel(frames, windows, detector, classifier, cfg, logger=logger)
    return binary_alerts(alerts, cfg)
