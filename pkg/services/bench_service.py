"""Latency harness: wall-clock time per window for a pipeline callable."""

import time
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from config.settings import Config
from models.domain import Alert, SequenceWindow
from services.logging_service import LoggingService

Pipeline = Callable[[Sequence, List[SequenceWindow]], List[Alert]]

TABLE_COLUMNS = ["Video Duration", "Video FPS", "Average Detection Time", "Total Processing Time"]


class TimingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: str = ""
    n_frames: int = 0
    fps: float = Field(default=Config.DEFAULT_FPS, gt=0)
    per_window_ms: List[float] = Field(default_factory=list)
    average_detection_time_ms: float = 0.0
    p50_ms: float = 0.0
    p95_ms: float = 0.0
    total_processing_ms: float = 0.0

    @property
    def video_duration_s(self) -> float:
        return self.n_frames / self.fps

    def table(self) -> pd.DataFrame:
        """One row per benchmarked stream, empty when no window was timed."""
        if not self.per_window_ms:
            return pd.DataFrame(columns=TABLE_COLUMNS)
        return pd.DataFrame(
            [[
                round(self.video_duration_s, 3),
                self.fps,
                round(self.average_detection_time_ms / 1000.0, 4),
                round(self.total_processing_ms / 1000.0, 4),
            ]],
            columns=TABLE_COLUMNS,
        )


def bench(
    pipeline: Pipeline,
    frames: Sequence,
    windows: Sequence[SequenceWindow],
    fps: float = Config.DEFAULT_FPS,
    mode: str = "",
    logger: Optional[LoggingService] = None,
) -> TimingReport:
    """
    Runs `pipeline(frames, [window])` once per window on the calling thread
    and times each call with the monotonic performance counter.
    """
    per_window: List[float] = []
    started = time.perf_counter()
    for window in windows:
        t0 = time.perf_counter()
        pipeline(frames, [window])
        per_window.append((time.perf_counter() - t0) * 1000.0)
    total_ms = (time.perf_counter() - started) * 1000.0

    average = sum(per_window) / len(per_window) if per_window else 0.0
    report = TimingReport(
        mode=mode,
        n_frames=len(frames),
        fps=fps,
        per_window_ms=per_window,
        average_detection_time_ms=average,
        p50_ms=float(np.percentile(per_window, 50)) if per_window else 0.0,
        p95_ms=float(np.percentile(per_window, 95)) if per_window else 0.0,
        total_processing_ms=total_ms if per_window else 0.0,
    )
    if logger:
        logger.info(
            "Benchmark finished.",
            context={"mode": mode, "windows": len(per_window),
                     "average_ms": round(average, 3), "total_ms": round(report.total_processing_ms, 3)},
        )
    return report
