"""
The four sequence generators.

  sliding          consecutive windows, stride = window_len unless overridden
  sliding_overlap  consecutive windows sharing `overlap` frames
  dynamic_step     one window of target_count frames spread over the video
  sliding_dynamic  windows of window_len frames spaced `dilation` apart,
                   successive windows starting `stride` frames later
                   (default: one full span, window_len * dilation)

Trailing partial windows are dropped; the classifier takes fixed-length input.
"""

from typing import Iterator, List

from models.config_models import WindowSpec
from models.domain import GeneratorMode, SequenceWindow
from models.errors import InvalidParam, VideoTooShort


def dynamic_step(n_frames: int, target_count: int) -> int:
    """floor(n_frames / target_count); raises VideoTooShort below target_count frames."""
    if target_count < 2:
        raise InvalidParam(f"target_count must be at least 2, got {target_count}")
    if n_frames < target_count:
        raise VideoTooShort(n_frames, target_count)
    return n_frames // target_count


def _strided(n_frames: int, window_len: int, spacing: int, stride: int) -> Iterator[List[int]]:
    span = (window_len - 1) * spacing + 1
    start = 0
    while start + span <= n_frames:
        yield [start + i * spacing for i in range(window_len)]
        start += stride


def iter_windows(spec: WindowSpec, n_frames: int) -> Iterator[SequenceWindow]:
    """Lazy form of `generate`, for streams where materializing every window is wasteful."""
    if spec.mode is GeneratorMode.DYNAMIC_STEP:
        target = spec.effective_target_count
        step = spec.step or dynamic_step(n_frames, target)
        if (target - 1) * step + 1 > n_frames:
            raise VideoTooShort(n_frames, (target - 1) * step + 1)
        yield SequenceWindow(
            frame_indices=tuple(i * step for i in range(target)),
            generator=spec.mode,
            window_id=spec.window_id_offset,
        )
        return

    if spec.mode is GeneratorMode.SLIDING:
        spacing, stride = 1, spec.stride or spec.window_len
    elif spec.mode is GeneratorMode.SLIDING_OVERLAP:
        spacing, stride = 1, spec.window_len - spec.overlap
    else:
        spacing = spec.dilation
        stride = spec.stride or spec.window_len * spec.dilation

    required = (spec.window_len - 1) * spacing + 1
    if n_frames < required:
        raise VideoTooShort(n_frames, required)

    for offset, indices in enumerate(_strided(n_frames, spec.window_len, spacing, stride)):
        yield SequenceWindow(
            frame_indices=tuple(indices),
            generator=spec.mode,
            window_id=spec.window_id_offset + offset,
        )


def generate(spec: WindowSpec, n_frames: int) -> List[SequenceWindow]:
    return list(iter_windows(spec, n_frames))
