"""
Rendering of backend-supplied attention fields: normalization, colour
overlays and iso-level contours (marching squares over the thresholded map).
"""

from typing import Dict, List, Sequence, Tuple

import cv2
import numpy as np
from skimage import measure

from config.settings import Config
from models.domain import Contour, Frame, Heatmap
from models.errors import InvalidParam, ShapeMismatch


def _blue_red_lut() -> np.ndarray:
    ramp = np.arange(256, dtype=np.uint8)
    lut = np.zeros((256, 3), dtype=np.uint8)
    lut[:, 0] = ramp
    lut[:, 2] = 255 - ramp
    lut.setflags(write=False)
    return lut


# RGB colour per normalized intensity index 0..255: blue (cold) to red (hot).
BLUE_RED_LUT = _blue_red_lut()


def normalize(h: Heatmap) -> Heatmap:
    """Min-max rescale to [0, 1]; a constant map becomes all zeros and is flagged degenerate."""
    lo, hi = float(h.values.min()), float(h.values.max())
    if not hi > lo:
        return Heatmap(values=np.zeros_like(h.values), frame_index=h.frame_index, degenerate=True)
    return Heatmap(values=(h.values - lo) / (hi - lo), frame_index=h.frame_index)


def colormap(values: np.ndarray) -> np.ndarray:
    """HxW values in [0, 1] -> HxWx3 uint8 RGB through the blue->red table."""
    index = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    return BLUE_RED_LUT[index]


def _to_rgb(frame: Frame) -> np.ndarray:
    if frame.channels == 3:
        return frame.pixels
    return np.repeat(frame.pixels, 3, axis=2)


def overlay(frame: Frame, h: Heatmap, alpha: float = Config.DEFAULT_OVERLAY_ALPHA) -> Frame:
    """
    Blends the colour-mapped heatmap into the frame:
    out = (1 - alpha) * frame + alpha * colormap(h), rounded and saturated.
    The heatmap is resampled to the frame size (nearest neighbour). The
    result is 3-channel, except at alpha 0 where the frame comes back as is.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParam(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return frame
    values = h.values
    if values.shape != (frame.height, frame.width):
        values = cv2.resize(
            values.astype(np.float32), (frame.width, frame.height), interpolation=cv2.INTER_NEAREST
        ).astype(np.float64)
    base = _to_rgb(frame).astype(np.float64)
    blended = (1.0 - alpha) * base + alpha * colormap(values).astype(np.float64)
    return frame.with_pixels(np.clip(np.rint(blended), 0, 255).astype(np.uint8))


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise InvalidParam(f"Contour level must lie strictly between 0 and 1, got {level}")


def contours(h: Heatmap, level: float = Config.DEFAULT_CONTOUR_LEVEL) -> List[Contour]:
    """
    Closed boundaries of the superlevel set {h >= level}.

    The thresholded mask is padded with one background pixel on every side so
    that every boundary closes, and the foreground is taken 4-connected. A
    component with holes yields its outer boundary plus one contour per hole.
    Points are (x, y) pixel coordinates.
    """
    _check_level(level)
    mask = (h.values >= level).astype(np.float64)
    if not mask.any():
        return []
    padded = np.pad(mask, 1, mode="constant", constant_values=0.0)
    out: List[Contour] = []
    for path in measure.find_contours(padded, 0.5, fully_connected="low"):
        points = [(float(col - 1.0), float(row - 1.0)) for row, col in path]
        if points[0] != points[-1]:
            points.append(points[0])
        if len(points) >= 4:
            out.append(Contour(points=tuple(points), level=level))
    return out


def contour_levels(h: Heatmap, levels: Sequence[float]) -> Dict[float, List[Contour]]:
    """Contours at several levels, so nested iso-lines carry some intensity information."""
    for level in levels:
        _check_level(level)
    return {float(level): contours(h, level) for level in sorted(set(levels))}


def contour_interior(found: Sequence[Contour], width: int, height: int) -> np.ndarray:
    """
    Rebuilds the enclosed pixel mask from contours with the even-odd rule:
    a pixel centre inside an odd number of contours is foreground.
    """
    inside = np.zeros((height, width), dtype=bool)
    if not found:
        return inside
    ys, xs = np.mgrid[0:height, 0:width]
    centres = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    for contour in found:
        polygon = np.asarray(contour.points, dtype=np.float64)
        inside ^= measure.points_in_poly(centres, polygon).reshape(height, width)
    return inside


def map_series(
    frames: Sequence[Frame],
    heatmaps: Sequence[Heatmap],
    alpha: float = Config.DEFAULT_OVERLAY_ALPHA,
    level: float = Config.DEFAULT_CONTOUR_LEVEL,
) -> List[Tuple[Frame, List[Contour]]]:
    """Normalizes each heatmap, then overlays it and extracts its contours, frame by frame."""
    if len(frames) != len(heatmaps):
        raise ShapeMismatch(f"{len(frames)} frames but {len(heatmaps)} heatmaps.")
    _check_level(level)
    out: List[Tuple[Frame, List[Contour]]] = []
    for frame, heatmap in zip(frames, heatmaps):
        normalized = normalize(heatmap)
        out.append((overlay(frame, normalized, alpha), contours(normalized, level)))
    return out
