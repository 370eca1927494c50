import itertools
import threading
import time
from types import MappingProxyType

import numpy as np
import pytest

from backends.replay_backend import ReplayClassifier, ReplayDetector, ReplayScript
from models.config_models import (
    ClassifierInput,
    ClassMode,
    FusionConfig,
    IouGate,
    NmsKind,
    PipelineMode,
    RuleVariant,
    SerialPreprocess,
    WindowSpec,
)
from models.domain import BoundingBox, Detection, Frame, GeneratorMode, RuleFired, SequenceWindow, Verdict
from models.errors import BackendError, ConfigurationError, FrameNotFound, InvalidParam
from models.registry import (
    ABNORMAL,
    FIGHT,
    FIRE,
    FIREARM,
    FLAME,
    GUNSHOT,
    NORMAL,
    PERSON,
    default_anomaly_registry,
)
from services.fusion_service import (
    KeyObjectDictionary,
    binary_alerts,
    correct_verdict,
    default_key_objects,
    prepare_classifier_input,
    run_parallel,
    run_pipeline,
    run_serial,
)
from services.windowing import generate
from tools.scenario_generator import bundled_scenario
from tools.simulated_backends import ConstantClassifier, NullDetector, RecordingClassifier, scenario_backends

PREDICTIONS = [FIGHT, GUNSHOT, FIRE, NORMAL]
FLAME_CASES = ["absent", "qualifying", "weak"]
PERSON_CASES = ["overlap", "disjoint", "absent"]
VARIANTS = list(RuleVariant)


def _det(cls, x, y, w, h, conf=0.6, frame=0):
    return Detection(box=BoundingBox(x=x, y=y, w=w, h=h), object_class=cls, confidence=conf, frame_index=frame)


def _verdict(label, window_id=0):
    return Verdict.certain(window_id, label, default_anomaly_registry())


def _window(indices, window_id=0):
    return SequenceWindow(frame_indices=tuple(indices), generator=GeneratorMode.SLIDING, window_id=window_id)


def _frames(n, side=32, value=60):
    return [Frame(index=i, pixels=np.full((side, side, 3), value, dtype=np.uint8)) for i in range(n)]


def _case_detections(flame, firearm, person):
    dets = []
    if flame == "qualifying":
        dets.append(_det(FLAME, 40, 40, 4, 4, conf=0.6))
    elif flame == "weak":
        dets.append(_det(FLAME, 40, 40, 4, 4, conf=0.5))
    if firearm:
        dets.append(_det(FIREARM, 0, 0, 4, 4, conf=0.6))
    if person == "overlap":
        dets.append(_det(PERSON, 2, 2, 4, 4, conf=0.6))
    elif person == "disjoint":
        dets.append(_det(PERSON, 20, 20, 4, 4, conf=0.6))
    return dets


def _oracle(predicted, flame, firearm, person, variant):
    flame_found = flame == "qualifying"
    if variant is RuleVariant.REDUCE_FALSE_POSITIVES:
        if predicted == FIRE and not flame_found:
            return NORMAL
        if predicted == GUNSHOT and not firearm:
            return NORMAL
    if predicted != NORMAL:
        return predicted
    if flame_found:
        return FIRE
    if firearm and person == "overlap":
        return GUNSHOT
    return NORMAL


def _expected_rule(predicted, final):
    if final == predicted:
        return RuleFired.NONE
    if final == NORMAL:
        return RuleFired.FP_VETO_FIRE if predicted == FIRE else RuleFired.FP_VETO_GUNSHOT
    return RuleFired.KEY_OBJECT_FIRE if final == FIRE else RuleFired.KEY_OBJECT_GUNSHOT


def test_correct_verdict_truth_table():
    cases = list(itertools.product(PREDICTIONS, FLAME_CASES, [False, True], PERSON_CASES, VARIANTS))
    assert len(cases) == 144

    mismatches = []
    for predicted, flame, firearm, person, variant in cases:
        cfg = FusionConfig(rule_variant=variant)
        alert = correct_verdict(_verdict(predicted), _case_detections(flame, firearm, person), cfg)
        expected = _oracle(predicted, flame, firearm, person, variant)
        if alert.final_class != expected or alert.rule_fired is not _expected_rule(predicted, expected):
            mismatches.append((predicted, flame, firearm, person, variant.value, alert.final_class))
    assert mismatches == []


def test_documented_examples():
    fn = FusionConfig()
    fp = FusionConfig(rule_variant=RuleVariant.REDUCE_FALSE_POSITIVES)

    kept = correct_verdict(_verdict(FIRE), [], fn)
    assert (kept.final_class, kept.rule_fired) == (FIRE, RuleFired.NONE)

    assert correct_verdict(_verdict(NORMAL), [_det(FLAME, 0, 0, 4, 4, conf=0.60)], fn).final_class == FIRE
    assert correct_verdict(_verdict(NORMAL), [_det(FIREARM, 0, 0, 4, 4, conf=0.9)], fn).final_class == NORMAL

    firearm, person = _det(FIREARM, 0, 0, 4, 4, conf=0.9), _det(PERSON, 2, 2, 4, 4, conf=0.8)
    gunshot = correct_verdict(_verdict(NORMAL), [firearm, person], fn)
    assert (gunshot.final_class, gunshot.rule_fired) == (GUNSHOT, RuleFired.KEY_OBJECT_GUNSHOT)
    assert set(gunshot.supporting_detections) == {firearm, person}

    vetoed = correct_verdict(_verdict(FIRE), [], fp)
    assert (vetoed.final_class, vetoed.rule_fired) == (NORMAL, RuleFired.FP_VETO_FIRE)


def test_flame_takes_precedence_over_firearm():
    dets = [_det(FIREARM, 0, 0, 4, 4), _det(PERSON, 2, 2, 4, 4), _det(FLAME, 30, 30, 4, 4)]
    assert correct_verdict(_verdict(NORMAL), dets, FusionConfig()).final_class == FIRE


def test_fight_is_never_vetoed():
    cfg = FusionConfig(rule_variant=RuleVariant.REDUCE_FALSE_POSITIVES)
    assert correct_verdict(_verdict(FIGHT), [], cfg).final_class == FIGHT


def test_touching_boxes_only_count_with_touch_flag():
    dets = [_det(FIREARM, 0, 0, 2, 2), _det(PERSON, 2, 0, 2, 2)]
    assert correct_verdict(_verdict(NORMAL), dets, FusionConfig()).final_class == NORMAL
    assert correct_verdict(_verdict(NORMAL), dets, FusionConfig(touch_counts=True)).final_class == GUNSHOT


def test_diou_gate():
    cfg = FusionConfig(iou_gate=IouGate.DIOU)
    overlapping = [_det(FIREARM, 0, 0, 4, 4), _det(PERSON, 2, 2, 4, 4)]
    assert correct_verdict(_verdict(NORMAL), overlapping, cfg).final_class == GUNSHOT
    touching = [_det(FIREARM, 0, 0, 2, 2), _det(PERSON, 2, 0, 2, 2)]
    assert correct_verdict(_verdict(NORMAL), touching, cfg).final_class == NORMAL


def test_firearm_alone_counts_when_person_not_required():
    cfg = FusionConfig(require_person_for_firearm=False)
    assert correct_verdict(_verdict(NORMAL), [_det(FIREARM, 0, 0, 4, 4)], cfg).final_class == GUNSHOT


def test_non_normal_prediction_survives_added_detections():
    rng = np.random.default_rng(11)
    cfg = FusionConfig()
    for _ in range(100):
        predicted = [FIGHT, GUNSHOT, FIRE][int(rng.integers(0, 3))]
        dets = [
            _det([FIREARM, FLAME, PERSON][int(rng.integers(0, 3))], float(rng.integers(0, 30)),
                 float(rng.integers(0, 30)), 4, 4, conf=float(rng.uniform(0, 1)))
            for _ in range(int(rng.integers(0, 6)))
        ]
        assert correct_verdict(_verdict(predicted), dets, cfg).final_class == predicted


def test_key_object_dictionary_validation(anomaly_registry, object_registry):
    assert default_key_objects().key_object_for(FIRE) == FLAME
    assert default_key_objects().key_object_for(FIGHT) is None

    with pytest.raises(ConfigurationError):
        KeyObjectDictionary(mapping=MappingProxyType({PERSON: FIGHT}), precedence=(PERSON,)).validate(
            anomaly_registry, object_registry)
    with pytest.raises(ConfigurationError):
        KeyObjectDictionary(mapping=MappingProxyType({"knife": FIGHT}), precedence=("knife",)).validate(
            anomaly_registry, object_registry)
    with pytest.raises(ConfigurationError):
        KeyObjectDictionary(precedence=(FLAME,)).validate(anomaly_registry, object_registry)


# ----------------------------------------------------------------------
# Parallel / serial orchestration
# ----------------------------------------------------------------------

def _script(detections=None, verdicts=None):
    return ReplayScript(
        detections=MappingProxyType(detections or {}),
        verdicts=MappingProxyType(verdicts or {}),
    )


def test_parallel_without_detections_keeps_normal():
    frames = _frames(40)
    windows = [_window(range(0, 20), 0), _window(range(20, 40), 1)]
    alerts = run_parallel(frames, windows, NullDetector(), ConstantClassifier(), FusionConfig())
    assert [a.final_class for a in alerts] == [NORMAL, NORMAL]


def test_parallel_frame_skip(test_logger):
    frames = _frames(20)
    windows = [_window(range(20))]
    script = _script(detections={5: (_det(FLAME, 1, 1, 4, 4, conf=0.9, frame=5),)})
    detector, classifier = ReplayDetector(script), ReplayClassifier(script)

    every_frame = run_parallel(frames, windows, detector, classifier, FusionConfig(frame_skip=1), test_logger)
    assert every_frame[0].final_class == FIRE
    skipped = run_parallel(frames, windows, detector, classifier, FusionConfig(frame_skip=10), test_logger)
    assert skipped[0].final_class == NORMAL


def test_parallel_feeds_classifier_resized_raw_frames():
    frames = _frames(20, side=16)
    recorder = RecordingClassifier()
    run_parallel(frames, [_window(range(20))], NullDetector(), recorder, FusionConfig(image_size=64))
    _, seen = recorder.calls[0]
    assert len(seen) == 20
    assert all(f.shape == (64, 64, 3) for f in seen)


def _ramp(n, side=16, step=10):
    return [Frame(index=i, pixels=np.full((side, side, 3), i * step, dtype=np.uint8)) for i in range(n)]


def test_difference_input_keeps_window_length():
    cfg = FusionConfig(image_size=16, classifier_input=ClassifierInput.DIFFERENCE)
    prepared = prepare_classifier_input(_ramp(5), cfg)

    assert [f.index for f in prepared] == [0, 1, 2, 3, 4]
    assert not prepared[0].pixels.any()
    assert all(np.all(f.pixels == 10) for f in prepared[1:])


def test_augmentations_apply_before_resize():
    pixels = np.zeros((8, 8, 3), dtype=np.uint8)
    pixels[:, :4] = 200
    frame = Frame(index=0, pixels=pixels)
    cfg = FusionConfig(image_size=16, augment="mirror_h,brightness:10")

    (prepared,) = prepare_classifier_input([frame], cfg)
    assert prepared.shape == (16, 16, 3)
    assert np.all(prepared.pixels[:, :8] == 10)
    assert np.all(prepared.pixels[:, 8:] == 210)


def test_parallel_classifier_receives_frame_differences():
    recorder = RecordingClassifier()
    cfg = FusionConfig(image_size=16, classifier_input=ClassifierInput.DIFFERENCE)
    run_parallel(_ramp(20), [_window(range(20))], NullDetector(), recorder, cfg)
    _, seen = recorder.calls[0]
    assert len(seen) == 20
    assert not seen[0].pixels.any()
    assert all(np.all(f.pixels == 10) for f in seen[1:])


def test_serial_classifier_receives_differences_of_marked_frames():
    recorder = RecordingClassifier()
    cfg = FusionConfig(sequence_length=2, image_size=16, classifier_input=ClassifierInput.DIFFERENCE)
    run_serial(_frames(2, side=16, value=90), [_window([0, 1])], NullDetector(), recorder, cfg,
               SerialPreprocess.MASK_ORIGINAL)
    _, seen = recorder.calls[0]
    assert all(not f.pixels.any() for f in seen)


def _duplicate_flames(frame=0):
    return (_det(FLAME, 2, 2, 6, 6, conf=0.9, frame=frame), _det(FLAME, 2, 2, 6, 6, conf=0.8, frame=frame))


@pytest.mark.parametrize("kind, expected_support", [(NmsKind.HARD, 1), (NmsKind.DIOU, 2)])
def test_parallel_uses_configured_nms_kind(kind, expected_support):
    script = _script(detections={0: _duplicate_flames()})
    cfg = FusionConfig(confidence_threshold=0.3, nms_kind=kind, diou_decay=0.5)
    (alert,) = run_parallel(_frames(20), [_window(range(20))], ReplayDetector(script), ReplayClassifier(script), cfg)

    assert alert.final_class == FIRE
    assert len(alert.supporting_detections) == expected_support
    if kind is NmsKind.DIOU:
        assert alert.supporting_detections[1].confidence == pytest.approx(0.4)


@pytest.mark.parametrize("kind, expected_kept", [(NmsKind.HARD, 1), (NmsKind.DIOU, 2)])
def test_serial_uses_configured_nms_kind(kind, expected_kept):
    script = _script(detections={0: _duplicate_flames()})
    cfg = FusionConfig(sequence_length=2, image_size=16, confidence_threshold=0.3, nms_kind=kind, diou_decay=0.5)
    (alert,) = run_serial(_frames(2, side=16), [_window([0, 1])], ReplayDetector(script), ConstantClassifier(), cfg)
    assert len(alert.supporting_detections) == expected_kept


def test_parallel_alerts_follow_window_order():
    frames = _frames(100, side=16)
    windows = [_window(range(i * 20, i * 20 + 20), i) for i in range(5)]
    verdicts = {i: _verdict([FIRE, NORMAL, FIGHT, GUNSHOT, NORMAL][i], window_id=i) for i in range(5)}
    script = _script(verdicts=verdicts)
    alerts = run_parallel(frames, windows, ReplayDetector(script), ReplayClassifier(script),
                          FusionConfig(image_size=16))
    assert [a.window_id for a in alerts] == [0, 1, 2, 3, 4]
    assert [a.final_class for a in alerts] == [FIRE, NORMAL, FIGHT, GUNSHOT, NORMAL]


class _SharedBackend:
    """One runtime serving both roles; concurrent calls are a failure."""

    thread_safe = False

    def __init__(self):
        self._active = 0
        self._lock = threading.Lock()
        self.max_active = 0

    def _enter(self):
        with self._lock:
            self._active += 1
            self.max_active = max(self.max_active, self._active)
        time.sleep(0.002)
        with self._lock:
            self._active -= 1

    def detect(self, frame):
        self._enter()
        return []

    def classify(self, frames, window):
        self._enter()
        return _verdict(NORMAL, window.window_id)


def test_single_threaded_shared_backend_is_not_called_concurrently():
    backend = _SharedBackend()
    frames = _frames(40, side=16)
    windows = [_window(range(0, 20), 0), _window(range(20, 40), 1)]
    run_parallel(frames, windows, backend, backend, FusionConfig(image_size=16))
    assert backend.max_active == 1


def test_backend_failure_carries_window_id():
    class Broken:
        thread_safe = True

        def detect(self, frame):
            raise RuntimeError("GPU out of memory")

    frames = _frames(40, side=16)
    windows = [_window(range(0, 20), 0), _window(range(20, 40), 1)]
    with pytest.raises(BackendError) as exc:
        run_parallel(frames, windows, Broken(), ConstantClassifier(), FusionConfig(image_size=16))
    assert exc.value.window_id == 0


def test_window_length_and_missing_frames_are_rejected():
    frames = _frames(10, side=16)
    with pytest.raises(InvalidParam):
        run_parallel(frames, [_window(range(5))], NullDetector(), ConstantClassifier(), FusionConfig())
    with pytest.raises(FrameNotFound):
        run_parallel(frames, [_window(range(5, 25))], NullDetector(), ConstantClassifier(), FusionConfig())


def test_serial_mask_original_preserves_verdicts_and_frames():
    frames = _frames(4, side=16, value=90)
    windows = [_window([0, 1], 0), _window([2, 3], 1)]
    verdicts = {0: _verdict(FIGHT, 0), 1: _verdict(NORMAL, 1)}
    script = _script(verdicts=verdicts)
    recorder = RecordingClassifier(ReplayClassifier(script))
    cfg = FusionConfig(sequence_length=2, image_size=16)

    alerts = run_serial(frames, windows, NullDetector(), recorder, cfg, SerialPreprocess.MASK_ORIGINAL)
    assert [a.final_class for a in alerts] == [FIGHT, NORMAL]
    assert all(a.rule_fired is RuleFired.NONE for a in alerts)
    for window, seen in recorder.calls:
        for frame in seen:
            assert np.array_equal(frame.pixels, frames[frame.index].pixels)


def test_serial_mask_black_blanks_frames_without_detections():
    recorder = RecordingClassifier()
    cfg = FusionConfig(sequence_length=2, image_size=16)
    run_serial(_frames(2, side=16, value=90), [_window([0, 1])], NullDetector(), recorder, cfg,
               SerialPreprocess.MASK_BLACK)
    _, seen = recorder.calls[0]
    assert all(not f.pixels.any() for f in seen)


def test_serial_draw_boxes_changes_only_the_perimeter():
    frames = _frames(2, side=32, value=60)
    det = _det(FLAME, 4, 4, 10, 8, conf=0.9, frame=0)
    script = _script(detections={0: (det,)})
    recorder = RecordingClassifier()
    cfg = FusionConfig(sequence_length=2, image_size=32, serial_preprocess=SerialPreprocess.DRAW_BOXES)

    alerts = run_serial(frames, [_window([0, 1])], ReplayDetector(script), recorder, cfg)
    _, seen = recorder.calls[0]
    changed = np.any(seen[0].pixels != frames[0].pixels, axis=2)
    assert changed.sum() == 2 * (10 + 8) - 4
    assert np.array_equal(seen[1].pixels, frames[1].pixels)
    assert alerts[0].supporting_detections == (det,)


def test_binary_alerts_collapse_labels():
    cfg = FusionConfig(class_mode=ClassMode.BINARY)
    alerts = [
        correct_verdict(_verdict(FIRE, 0), [], cfg),
        correct_verdict(_verdict(NORMAL, 1), [], cfg),
        correct_verdict(_verdict(NORMAL, 2), [_det(FLAME, 0, 0, 4, 4)], cfg),
    ]
    collapsed = binary_alerts(alerts, cfg)
    assert [a.final_class for a in collapsed] == [ABNORMAL, NORMAL, ABNORMAL]
    assert [a.window_id for a in collapsed] == [0, 1, 2]
    assert binary_alerts(alerts, FusionConfig()) == alerts


def test_run_pipeline_dispatches_on_mode():
    frames = _frames(2, side=16)
    windows = [_window([0, 1])]
    for mode in PipelineMode:
        cfg = FusionConfig(mode=mode, sequence_length=2, image_size=16, class_mode=ClassMode.BINARY)
        alerts = run_pipeline(frames, windows, NullDetector(), ConstantClassifier(FIRE), cfg)
        assert [a.final_class for a in alerts] == [ABNORMAL]


# ----------------------------------------------------------------------
# End to end on the bundled scenario
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def scenario_and_windows():
    scenario = bundled_scenario(seed=7, n_frames=600)
    windows = generate(WindowSpec(window_len=20), len(scenario.frames))
    return scenario, windows


def test_scenario_parallel_fn_recovers_missed_fire_windows(scenario_and_windows, test_logger):
    scenario, windows = scenario_and_windows
    detector, classifier = scenario_backends(scenario, windows, missed=(12, 15))

    alerts = run_parallel(scenario.frames, windows, detector, classifier, FusionConfig(), test_logger)
    expected = scenario.window_labels(windows)
    assert expected.count(FIRE) == 10
    assert [a.final_class for a in alerts] == expected
    corrected = [a.window_id for a in alerts if a.rule_fired is RuleFired.KEY_OBJECT_FIRE]
    assert corrected == [12, 15]


def test_scenario_parallel_fp_without_flames_is_all_normal(scenario_and_windows):
    scenario, windows = scenario_and_windows
    detector, classifier = scenario_backends(scenario, windows, drop_classes=(FLAME,))

    cfg = FusionConfig(rule_variant=RuleVariant.REDUCE_FALSE_POSITIVES)
    alerts = run_parallel(scenario.frames, windows, detector, classifier, cfg)
    assert all(a.final_class == NORMAL for a in alerts)
    assert sum(a.rule_fired is RuleFired.FP_VETO_FIRE for a in alerts) == 10
