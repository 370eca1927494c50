"""
Detection and classification metrics.

Detection side: the badBox matching algorithm (NMS-filtered predictions,
greedy best-IoU matching per gt box, IoU window and minimum box size
criteria). Classification side: one-vs-rest precision/recall/F1 and
row-normalized confusion matrices, per video or per sequence.
"""

from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from models.config_models import ClassMode, EvalConfig
from models.domain import Alert, Detection, GeneratorMode, SequenceWindow
from models.errors import InvalidParam, LabelGap, ShapeMismatch
from models.registry import (
    ABNORMAL,
    ClassRegistry,
    binary_registry,
    default_anomaly_registry,
    default_object_registry,
    registry_binary_collapse,
)
from services.geometry import iou, suppress


class EvalMode(str, Enum):
    PER_VIDEO = "per_video"
    PER_SEQUENCE = "per_sequence"


class Prf(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0


def f1_from_rates(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both rates are 0."""
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else 0.0


def prf_from_counts(tp: int, fp: int, fn: int, tn: int = 0) -> Prf:
    if min(tp, fp, fn, tn) < 0:
        raise InvalidParam(f"Counts must be non-negative: tp={tp} fp={fp} fn={fn} tn={tn}")
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    return Prf(
        accuracy=_ratio(tp + tn, tp + fp + fn + tn),
        precision=precision,
        recall=recall,
        f1=f1_from_rates(precision, recall),
    )


# ----------------------------------------------------------------------
# Detection matching (badBox)
# ----------------------------------------------------------------------

class ClassMatchStats(BaseModel):
    """One row of the detection table. Rates are percentages (of gt, or of detections for fp)."""

    model_config = ConfigDict(frozen=True)

    object_class: str
    detected_count: int = 0
    gt_count: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    badbox: int = 0
    mean_iou: float = 0.0
    tp_rate: float = 0.0
    fp_rate: float = 0.0
    fn_rate: float = 0.0
    badbox_rate: float = 0.0
    prf: Prf = Prf()


class MatchReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    config: EvalConfig
    rows: Tuple[ClassMatchStats, ...]

    def row(self, object_class: str) -> ClassMatchStats:
        for row in self.rows:
            if row.object_class == object_class:
                return row
        raise KeyError(object_class)

    def total(self) -> ClassMatchStats:
        """All classes pooled; mean_iou weighted by tp."""
        tp = sum(r.tp for r in self.rows)
        return _stats_row(
            "all",
            detected=sum(r.detected_count for r in self.rows),
            gt=sum(r.gt_count for r in self.rows),
            tp=tp,
            fp=sum(r.fp for r in self.rows),
            fn=sum(r.fn for r in self.rows),
            badbox=sum(r.badbox for r in self.rows),
            iou_sum=sum(r.mean_iou * r.tp for r in self.rows),
        )


def _stats_row(object_class: str, detected: int, gt: int, tp: int, fp: int, fn: int, badbox: int,
               iou_sum: float) -> ClassMatchStats:
    return ClassMatchStats(
        object_class=object_class,
        detected_count=detected,
        gt_count=gt,
        tp=tp,
        fp=fp,
        fn=fn,
        badbox=badbox,
        mean_iou=_ratio(iou_sum, tp),
        tp_rate=100.0 * _ratio(tp, gt),
        fp_rate=100.0 * _ratio(fp, detected),
        fn_rate=100.0 * _ratio(fn, gt),
        badbox_rate=100.0 * _ratio(badbox, gt),
        prf=prf_from_counts(tp, fp, fn, 0),
    )


def _group(dets: Sequence[Detection]) -> Dict[Tuple[int, str], List[int]]:
    groups: Dict[Tuple[int, str], List[int]] = {}
    for i, det in enumerate(dets):
        groups.setdefault((det.frame_index, det.object_class), []).append(i)
    return groups


def match_detections(
    gt: Sequence[Detection],
    preds: Sequence[Detection],
    cfg: EvalConfig,
    registry: Optional[ClassRegistry] = None,
) -> MatchReport:
    """
    Matches predictions to ground truth frame by frame and class by class.

    Predictions go through NMS first (per frame, hard or DIoU as configured). Gt boxes are visited in
    descending area; each takes the unmatched overlapping prediction with the
    highest IoU (ties: higher confidence, then input order). A match inside
    [iou_min, iou_max] whose smaller side reaches min_box_size is a TP;
    any other match is a badBox and also counts as FN. Predictions never
    selected are FP.
    """
    registry = registry or default_object_registry()

    by_frame: Dict[int, List[Detection]] = {}
    for det in preds:
        by_frame.setdefault(det.frame_index, []).append(det)
    surviving: List[Detection] = []
    for frame_index in sorted(by_frame):
        surviving.extend(suppress(
            by_frame[frame_index], cfg.confidence_threshold, cfg.nms_overlap, cfg.nms_kind, cfg.diou_decay, registry
        ))

    counts: Dict[str, Dict[str, float]] = {}

    def bucket(object_class: str) -> Dict[str, float]:
        return counts.setdefault(object_class, dict(detected=0, gt=0, tp=0, fp=0, fn=0, badbox=0, iou_sum=0.0))

    pred_groups = _group(surviving)
    gt_groups = _group(gt)
    for key in set(pred_groups) | set(gt_groups):
        _, object_class = key
        stats = bucket(object_class)
        gt_idx = sorted(gt_groups.get(key, []), key=lambda i: -gt[i].box.area)
        pred_idx = pred_groups.get(key, [])
        stats["gt"] += len(gt_idx)
        stats["detected"] += len(pred_idx)
        matched = set()

        for g in gt_idx:
            best, best_key = None, None
            for p in pred_idx:
                if p in matched:
                    continue
                overlap = iou(gt[g].box, surviving[p].box)
                if overlap <= 0.0:
                    continue
                candidate_key = (overlap, surviving[p].confidence, -p)
                if best_key is None or candidate_key > best_key:
                    best, best_key = p, candidate_key
            if best is None:
                stats["fn"] += 1
                continue
            matched.add(best)
            overlap = best_key[0]
            box = surviving[best].box
            if cfg.iou_min <= overlap <= cfg.iou_max and min(box.w, box.h) >= cfg.min_box_size:
                stats["tp"] += 1
                stats["iou_sum"] += overlap
            else:
                stats["badbox"] += 1
                stats["fn"] += 1
        stats["fp"] += len(pred_idx) - len(matched)

    ordered = [c for c in registry.ordered()] + sorted(set(counts) - set(registry.ordered()))
    rows = []
    for object_class in ordered:
        s = bucket(object_class)
        rows.append(_stats_row(
            object_class,
            detected=int(s["detected"]), gt=int(s["gt"]), tp=int(s["tp"]), fp=int(s["fp"]),
            fn=int(s["fn"]), badbox=int(s["badbox"]), iou_sum=s["iou_sum"],
        ))
    return MatchReport(config=cfg, rows=tuple(rows))


# ----------------------------------------------------------------------
# Classification metrics
# ----------------------------------------------------------------------

class ConfusionMatrix(BaseModel):
    """Counts indexed [truth][prediction]; rates are row-normalized, empty rows all zero."""

    model_config = ConfigDict(frozen=True)

    labels: Tuple[str, ...]
    counts: Tuple[Tuple[int, ...], ...]
    rates: Tuple[Tuple[float, ...], ...]
    empty_rows: Tuple[str, ...] = ()

    def rate(self, truth: str, prediction: str) -> float:
        return self.rates[self.labels.index(truth)][self.labels.index(prediction)]

    def count(self, truth: str, prediction: str) -> int:
        return self.counts[self.labels.index(truth)][self.labels.index(prediction)]

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


def _infer_registry(labels: Sequence[str]) -> ClassRegistry:
    return binary_registry() if ABNORMAL in labels else default_anomaly_registry()


def confusion(
    truths: Sequence[str],
    predictions: Sequence[str],
    registry: Optional[ClassRegistry] = None,
) -> ConfusionMatrix:
    if len(truths) != len(predictions):
        raise ShapeMismatch(f"{len(truths)} truths but {len(predictions)} predictions.")
    registry = registry or _infer_registry(list(truths) + list(predictions))
    labels = registry.ordered()

    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    if truths:
        rows = [registry.index(registry.require(t)) for t in truths]
        cols = [registry.index(registry.require(p)) for p in predictions]
        np.add.at(counts, (rows, cols), 1)

    totals = counts.sum(axis=1, keepdims=True)
    rates = np.divide(counts, totals, out=np.zeros(counts.shape, dtype=np.float64), where=totals > 0)
    return ConfusionMatrix(
        labels=labels,
        counts=tuple(tuple(int(v) for v in row) for row in counts),
        rates=tuple(tuple(float(v) for v in row) for row in rates),
        empty_rows=tuple(label for label, total in zip(labels, totals[:, 0]) if total == 0),
    )


class AlertEvaluation(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: EvalMode
    per_class: Dict[str, Prf]
    support: Dict[str, int]
    weighted: Prf
    accuracy: float
    confusion: ConfusionMatrix


def _one_vs_rest(matrix: np.ndarray, labels: Sequence[str]) -> Dict[str, Prf]:
    total = int(matrix.sum())
    out: Dict[str, Prf] = {}
    for k, label in enumerate(labels):
        tp = int(matrix[k, k])
        fn = int(matrix[k, :].sum()) - tp
        fp = int(matrix[:, k].sum()) - tp
        out[label] = prf_from_counts(tp, fp, fn, total - tp - fn - fp)
    return out


def evaluate_alerts(
    alerts: Sequence[Alert],
    ground_truth_labels: Mapping[int, str],
    mode: EvalMode = EvalMode.PER_SEQUENCE,
    windows: Optional[Sequence[SequenceWindow]] = None,
    class_mode: ClassMode = ClassMode.MULTI_CLASS,
) -> AlertEvaluation:
    """
    Scores alerts against window labels (keyed by window id).

    PER_VIDEO expects one DynamicStep window per video: when `windows` are
    supplied, every alert's window must be a DynamicStep summary and window
    ids must be unique. In binary class mode both sides are collapsed first.

    Raises:
        LabelGap: an alert whose window has no ground-truth label.
        InvalidParam: PER_VIDEO input that is not one summary window per video.
    """
    mode = EvalMode(mode)
    missing = [a.window_id for a in alerts if a.window_id not in ground_truth_labels]
    if missing:
        raise LabelGap(f"No ground-truth label for windows {missing[:10]}")

    if mode is EvalMode.PER_VIDEO:
        ids = [a.window_id for a in alerts]
        if len(set(ids)) != len(ids):
            raise InvalidParam("Per-video evaluation needs exactly one window per video.")
        if windows is not None:
            generators = {w.window_id: w.generator for w in windows}
            wrong = [i for i in ids if generators.get(i) is not GeneratorMode.DYNAMIC_STEP]
            if wrong:
                raise InvalidParam(f"Per-video evaluation needs DynamicStep windows; got others for {wrong[:10]}")

    truths = [ground_truth_labels[a.window_id] for a in alerts]
    predictions = [a.final_class for a in alerts]
    registry = None
    if ClassMode(class_mode) is ClassMode.BINARY:
        truths = [registry_binary_collapse(t) for t in truths]
        predictions = [registry_binary_collapse(p) for p in predictions]
        registry = binary_registry()

    matrix = confusion(truths, predictions, registry)
    raw = matrix.as_array()
    per_class = _one_vs_rest(raw, matrix.labels)
    support = {label: int(raw[k, :].sum()) for k, label in enumerate(matrix.labels)}
    total = int(raw.sum())
    accuracy = _ratio(float(np.trace(raw)), total)

    weights = {label: _ratio(support[label], total) for label in matrix.labels}
    weighted = Prf(
        accuracy=accuracy,
        precision=sum(weights[l] * per_class[l].precision for l in matrix.labels),
        recall=sum(weights[l] * per_class[l].recall for l in matrix.labels),
        f1=sum(weights[l] * per_class[l].f1 for l in matrix.labels),
    )
    return AlertEvaluation(
        mode=mode,
        per_class=per_class,
        support=support,
        weighted=weighted,
        accuracy=accuracy,
        confusion=matrix,
    )
