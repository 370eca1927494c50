"""
File formats of the explain and scenario tooling: binary PGM/PPM frames,
heatmap JSONL and contour JSON.
"""

import json
import os
import re
from typing import Iterable, List, Literal, Sequence, Tuple

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from models.domain import Contour, Frame, Heatmap
from models.errors import AnomalyFusionError, FrameNotFound, ParseError

FRAME_EXTENSIONS = (".ppm", ".pgm")
_INDEX_PATTERN = re.compile(r"(\d+)(?=\.p[gp]m$)")


def frame_filename(index: int, channels: int, prefix: str = "frame") -> str:
    return f"{prefix}_{index:06d}{'.pgm' if channels == 1 else '.ppm'}"


def write_frame(path: str, frame: Frame) -> None:
    """P6 for colour frames, P5 for grey frames (OpenCV picks the variant from the extension)."""
    pixels = frame.pixels[:, :, 0] if frame.channels == 1 else cv2.cvtColor(frame.pixels, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(path, np.ascontiguousarray(pixels)):
        raise OSError(f"Could not write frame {frame.index} to {path}")


def read_frame(path: str, index: int = 0) -> Frame:
    pixels = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if pixels is None:
        raise FrameNotFound(f"Cannot read image {path}")
    if pixels.ndim == 3:
        pixels = cv2.cvtColor(pixels, cv2.COLOR_BGR2RGB)
    return Frame(index=index, pixels=pixels)


def write_frames(directory: str, frames: Iterable[Frame], prefix: str = "frame") -> List[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for frame in frames:
        path = os.path.join(directory, frame_filename(frame.index, frame.channels, prefix))
        write_frame(path, frame)
        paths.append(path)
    return paths


def read_frames(directory: str) -> List[Frame]:
    """
    Reads every PGM/PPM file of a directory in name order. The frame index is
    the number ending the file name, or the position when there is none.
    """
    if not os.path.isdir(directory):
        raise FrameNotFound(f"Frame directory not found: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(FRAME_EXTENSIONS))
    frames = []
    for position, name in enumerate(names):
        match = _INDEX_PATTERN.search(name.lower())
        index = int(match.group(1)) if match else position
        frames.append(read_frame(os.path.join(directory, name), index))
    return frames


class HeatmapRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    v: Literal[1]
    frame: int = Field(ge=0)
    w: int = Field(ge=1)
    h: int = Field(ge=1)
    values: List[float]

    @model_validator(mode="after")
    def _size_matches(self) -> "HeatmapRecord":
        if len(self.values) != self.w * self.h:
            raise ValueError(f"{len(self.values)} values for a {self.w}x{self.h} map")
        return self


def load_heatmaps(path: str) -> List[Heatmap]:
    """Heatmap JSONL, one row-major map per line."""
    out: List[Heatmap] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = HeatmapRecord.model_validate_json(line)
                values = np.asarray(record.values, dtype=np.float64).reshape(record.h, record.w)
                out.append(Heatmap(values=values, frame_index=record.frame))
            except ValidationError as e:
                raise ParseError(f"invalid heatmap record: {e.errors()[0]['msg']}", line_number) from e
            except (ValueError, AnomalyFusionError) as e:
                raise ParseError(f"invalid heatmap record: {e}", line_number) from e
    return out


def write_heatmaps(path: str, heatmaps: Sequence[Heatmap]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for position, heatmap in enumerate(heatmaps):
            record = {
                "v": 1,
                "frame": heatmap.frame_index if heatmap.frame_index is not None else position,
                "w": heatmap.width,
                "h": heatmap.height,
                "values": [float(v) for v in heatmap.values.ravel()],
            }
            handle.write(json.dumps(record) + "\n")


def contours_payload(series: Sequence[Tuple[int, Sequence[Contour]]]) -> dict:
    return {
        "v": 1,
        "frames": [
            {
                "frame": frame_index,
                "contours": [
                    {"level": c.level, "points": [list(p) for p in c.points]} for c in found
                ],
            }
            for frame_index, found in series
        ],
    }


def write_contours(path: str, series: Sequence[Tuple[int, Sequence[Contour]]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(contours_payload(series), handle, indent=2)
