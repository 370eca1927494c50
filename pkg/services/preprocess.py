"""Frame transforms: box drawing, box masks, frame difference, augmentation, resizing."""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import cv2
import numpy as np

from models.config_models import MaskBackground
from models.domain import Detection, Frame
from models.errors import InvalidParam, ShapeMismatch
from models.registry import ClassRegistry, default_object_registry

# Outline colours in object-registry order (RGB); grey levels for 1-channel frames.
BOX_PALETTE_RGB: Tuple[Tuple[int, int, int], ...] = (
    (255, 0, 0),
    (255, 160, 0),
    (0, 255, 0),
    (0, 128, 255),
    (255, 0, 255),
    (0, 255, 255),
)
BOX_PALETTE_GRAY: Tuple[int, ...] = (255, 200, 150, 100, 50, 25)

MIN_RESIZE_SIDE = 8


@dataclass(frozen=True)
class MirrorH:
    pass


@dataclass(frozen=True)
class Brightness:
    delta: int


@dataclass(frozen=True)
class Zoom:
    factor: float


AugmentOp = Union[MirrorH, Brightness, Zoom]


def parse_augment(text: str) -> AugmentOp:
    """'mirror_h', 'brightness:<int>' or 'zoom:<float>' as written in run configs."""
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name == "mirror_h" and not arg:
            return MirrorH()
        if name == "brightness":
            return Brightness(int(arg))
        if name == "zoom":
            return Zoom(float(arg))
    except ValueError:
        pass
    raise InvalidParam(f"Unknown augmentation '{text}'")


def box_color(object_class: str, channels: int, registry: Optional[ClassRegistry] = None) -> Tuple[int, ...]:
    registry = registry or default_object_registry()
    rank = registry.ordered().index(object_class) if object_class in registry else len(registry)
    if channels == 1:
        return (BOX_PALETTE_GRAY[rank % len(BOX_PALETTE_GRAY)],)
    return BOX_PALETTE_RGB[rank % len(BOX_PALETTE_RGB)]


def _as_cv(pixels: np.ndarray) -> np.ndarray:
    """OpenCV wants HxW for single-channel images."""
    return pixels[:, :, 0] if pixels.shape[2] == 1 else pixels


def _from_cv(array: np.ndarray) -> np.ndarray:
    return array[:, :, np.newaxis] if array.ndim == 2 else array


def _clip_outline(bounds: Tuple[int, int, int, int], width: int, height: int) -> Tuple[int, int, int, int]:
    """
    Pulls a pixel span into [-1, width] x [-1, height] (outline corners
    included). An edge outside the frame stays outside, so it is not drawn.
    """
    x0, y0, x1, y1 = bounds
    x0 = min(max(x0, -1), width)
    y0 = min(max(y0, -1), height)
    x1 = min(max(x1, 0), width + 1)
    y1 = min(max(y1, 0), height + 1)
    return x0, y0, x1, y1


def draw_boxes(frame: Frame, dets: Sequence[Detection], registry: Optional[ClassRegistry] = None) -> Frame:
    """Burns a 1-px outline per detection into a copy of the frame, clipped to its bounds."""
    canvas = np.ascontiguousarray(_as_cv(frame.writable_copy()))
    for det in dets:
        x0, y0, x1, y1 = _clip_outline(det.box.pixel_bounds(), frame.width, frame.height)
        color = box_color(det.object_class, frame.channels, registry)
        cv2.rectangle(canvas, (x0, y0), (x1 - 1, y1 - 1), color, thickness=1, lineType=cv2.LINE_8)
    return frame.with_pixels(_from_cv(canvas))


def box_mask(frame: Frame, dets: Sequence[Detection]) -> np.ndarray:
    """Boolean HxW mask of the pixels covered by at least one detection box."""
    mask = np.zeros((frame.height, frame.width), dtype=bool)
    for det in dets:
        x0, y0, x1, y1 = det.box.pixel_bounds()
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(frame.width, x1), min(frame.height, y1)
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
    return mask


def apply_box_mask(frame: Frame, dets: Sequence[Detection], background: MaskBackground) -> Frame:
    """
    Keeps only the pixels inside detection boxes. A frame without detections
    becomes black (BLACK) or is returned unchanged (ORIGINAL).
    """
    background = MaskBackground(background)
    if not dets and background is MaskBackground.ORIGINAL:
        return frame.with_pixels(frame.pixels)
    mask = box_mask(frame, dets)
    out = np.where(mask[:, :, np.newaxis], frame.pixels, 0).astype(np.uint8)
    return frame.with_pixels(out)


def frame_difference(a: Frame, b: Frame) -> Frame:
    """Per-pixel absolute difference; the result carries b's index."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"Cannot difference frames of shapes {a.shape} and {b.shape}.")
    diff = cv2.absdiff(_as_cv(a.pixels), _as_cv(b.pixels))
    return b.with_pixels(_from_cv(diff))


def augment(frame: Frame, op: AugmentOp) -> Frame:
    if isinstance(op, MirrorH):
        return frame.with_pixels(frame.pixels[:, ::-1, :])

    if isinstance(op, Brightness):
        if isinstance(op.delta, bool) or not isinstance(op.delta, (int, np.integer)):
            raise InvalidParam(f"Brightness delta must be an integer, got {op.delta!r}")
        shifted = frame.pixels.astype(np.int16) + int(op.delta)
        return frame.with_pixels(np.clip(shifted, 0, 255).astype(np.uint8))

    if isinstance(op, Zoom):
        if not np.isfinite(op.factor) or op.factor < 1.0:
            raise InvalidParam(f"Zoom factor must be >= 1, got {op.factor}")
        crop_h = max(1, int(frame.height / op.factor))
        crop_w = max(1, int(frame.width / op.factor))
        top = (frame.height - crop_h) // 2
        left = (frame.width - crop_w) // 2
        crop = np.ascontiguousarray(_as_cv(frame.pixels[top:top + crop_h, left:left + crop_w, :]))
        zoomed = cv2.resize(crop, (frame.width, frame.height), interpolation=cv2.INTER_NEAREST)
        return frame.with_pixels(_from_cv(zoomed))

    raise InvalidParam(f"Unknown augmentation {op!r}")


def resize(frame: Frame, side: int) -> Frame:
    """Nearest-neighbour square resize to side x side."""
    if side < MIN_RESIZE_SIDE:
        raise InvalidParam(f"Resize side must be at least {MIN_RESIZE_SIDE}, got {side}")
    if frame.height == side and frame.width == side:
        return frame
    resized = cv2.resize(np.ascontiguousarray(_as_cv(frame.pixels)), (side, side), interpolation=cv2.INTER_NEAREST)
    return frame.with_pixels(_from_cv(resized))
