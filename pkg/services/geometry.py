"""Bounding-box arithmetic: IoU, DIoU, hard NMS and score-decay DIoU-NMS."""

import math
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import Config
from models.config_models import NmsKind
from models.domain import BoundingBox, Detection
from models.errors import InvalidBox, InvalidParam
from models.registry import ClassRegistry, default_object_registry


def _check(box: BoundingBox) -> None:
    # Boxes built with model_construct skip validation.
    if not all(math.isfinite(v) for v in box.as_xywh()) or box.w <= 0 or box.h <= 0:
        raise InvalidBox(f"Invalid box {box.as_xywh()}")


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """area(a ∩ b) / area(a ∪ b); 0 for disjoint boxes."""
    _check(a)
    _check(b)
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def enclosing_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    x0, y0 = min(a.x, b.x), min(a.y, b.y)
    x1, y1 = max(a.x2, b.x2), max(a.y2, b.y2)
    return BoundingBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0)


def diou(a: BoundingBox, b: BoundingBox) -> float:
    """
    Distance-IoU: iou(a, b) - d^2 / c^2, where d is the distance between the
    box centres and c the diagonal of the smallest enclosing box.
    """
    value = iou(a, b)
    (ax, ay), (bx, by) = a.center, b.center
    d2 = (ax - bx) ** 2 + (ay - by) ** 2
    if d2 == 0.0:
        return value
    enclosing = enclosing_box(a, b)
    c2 = enclosing.w ** 2 + enclosing.h ** 2
    return value - d2 / c2


def touches(a: BoundingBox, b: BoundingBox) -> bool:
    """True when the closed boxes share at least one point (edge contact counts)."""
    _check(a)
    _check(b)
    return a.x <= b.x2 and b.x <= a.x2 and a.y <= b.y2 and b.y <= a.y2


def _greedy_order(dets: Sequence[Detection], registry: ClassRegistry) -> List[int]:
    """Indices by descending confidence, then smaller area, registry order, input order."""
    known = registry.ordered()

    def key(i: int) -> Tuple[float, float, int, int]:
        det = dets[i]
        class_rank = known.index(det.object_class) if det.object_class in known else len(known)
        return -det.confidence, det.box.area, class_rank, i

    return sorted(range(len(dets)), key=key)


def _group_by_class(order: Sequence[int], dets: Sequence[Detection]) -> Dict[str, List[int]]:
    groups: Dict[str, List[int]] = OrderedDict()
    for i in order:
        groups.setdefault(dets[i].object_class, []).append(i)
    return groups


def nms(
    dets: Sequence[Detection],
    conf: float,
    overlap: float,
    registry: Optional[ClassRegistry] = None,
) -> List[Detection]:
    """
    Class-aware greedy non-maximum suppression.

    Detections below `conf` are dropped; within each object class the
    highest-confidence box is kept and every box whose IoU with it exceeds
    `overlap` is removed. Output is sorted by descending confidence.
    """
    registry = registry or default_object_registry()
    candidates = [d for d in dets if d.confidence >= conf]
    if not candidates:
        return []

    order = _greedy_order(candidates, registry)
    keep: List[int] = []
    for indices in _group_by_class(order, candidates).values():
        boxes = np.array([candidates[i].box.as_xyxy() for i in indices], dtype=np.float64)
        x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
        areas = (x2 - x1) * (y2 - y1)
        remaining = np.arange(len(indices))
        while remaining.size > 0:
            i = remaining[0]
            keep.append(indices[i])
            rest = remaining[1:]
            xx1 = np.maximum(x1[i], x1[rest])
            yy1 = np.maximum(y1[i], y1[rest])
            xx2 = np.minimum(x2[i], x2[rest])
            yy2 = np.minimum(y2[i], y2[rest])
            inter = np.maximum(0.0, xx2 - xx1) * np.maximum(0.0, yy2 - yy1)
            ovr = inter / (areas[i] + areas[rest] - inter)
            remaining = rest[ovr <= overlap]

    rank = {idx: pos for pos, idx in enumerate(order)}
    return [candidates[i] for i in sorted(keep, key=rank.__getitem__)]


def diou_nms(
    dets: Sequence[Detection],
    conf: float,
    overlap: float,
    decay: float = Config.DEFAULT_DIOU_NMS_DECAY,
    registry: Optional[ClassRegistry] = None,
) -> List[Detection]:
    """
    Score-decay NMS with a DIoU suppression test.

    Instead of removing a same-class box whose DIoU with the current best
    exceeds `overlap`, its confidence is multiplied by `decay`. The best box
    is re-selected after every decay round; a final pass drops everything
    that fell below `conf`.
    """
    if not 0.0 < decay < 1.0:
        raise InvalidParam(f"decay must lie in (0, 1), got {decay}")
    registry = registry or default_object_registry()
    pool = [d for d in dets if d.confidence >= conf]
    selected: List[Detection] = []

    while pool:
        best_idx = _greedy_order(pool, registry)[0]
        best = pool.pop(best_idx)
        selected.append(best)
        decayed: List[Detection] = []
        for det in pool:
            if det.object_class == best.object_class and diou(best.box, det.box) > overlap:
                det = det.model_copy(update={"confidence": det.confidence * decay})
            decayed.append(det)
        pool = decayed

    survivors = [d for d in selected if d.confidence >= conf]
    return [survivors[i] for i in _greedy_order(survivors, registry)]


def suppress(
    dets: Sequence[Detection],
    conf: float,
    overlap: float,
    kind: NmsKind = NmsKind.HARD,
    decay: float = Config.DEFAULT_DIOU_NMS_DECAY,
    registry: Optional[ClassRegistry] = None,
) -> List[Detection]:
    """Runs the configured suppression: hard IoU `nms` or score-decay `diou_nms`."""
    if NmsKind(kind) is NmsKind.DIOU:
        return diou_nms(dets, conf, overlap, decay, registry)
    return nms(dets, conf, overlap, registry)
