"""
The four command-line operations. Each returns its report payload and
raises typed errors; exit codes are decided by main.py.
"""

import os
import sys
from typing import Any, Dict, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np
from pydantic import ValidationError

from backends.backend_factory import build_backends
from backends.replay_backend import load_detections
from config.load_config import load_run_config
from config.settings import Config
from models.config_models import EvalConfig, InputKind, RunConfig
from models.domain import Frame, GeneratorMode, SequenceWindow
from models.errors import ConfigurationError, FrameNotFound, VideoTooShort
from services.bench_service import bench
from services.evaluation_service import EvalMode, evaluate_alerts, match_detections
from services.explain_service import contour_levels, map_series, normalize
from services.fusion_service import run_pipeline
from services.logging_service import LoggingService
from services.report_store import ReportStore
from services.windowing import generate
from tools.frame_io import load_heatmaps, read_frames, write_contours, write_frames
from tools.report_io import (
    alert_record,
    alerts_frame,
    alerts_jsonl,
    evaluation_payload,
    match_report_frame,
    match_report_payload,
    timing_payload,
    write_csv,
    write_json,
)
from tools.scenario_generator import Scenario, bundled_scenario


def _persist(store: Optional[ReportStore], command: str, payload: Dict[str, Any], logger: LoggingService) -> None:
    if store is None:
        return
    run_id = store.save_report(command, payload, logger.trace_id or "")
    if run_id:
        logger.info("Report persisted.", context={"command": command, "run_id": run_id})


def _close_backends(*backends) -> None:
    for backend in backends:
        close = getattr(backend, "close", None)
        if callable(close):
            close()


def _blank_frames(n_frames: int, side: int) -> List[Frame]:
    blank = np.zeros((side, side, 3), dtype=np.uint8)
    return [Frame(index=i, pixels=blank) for i in range(n_frames)]


def load_inputs(run_cfg: RunConfig) -> Tuple[List[Frame], Optional[Scenario]]:
    """
    Frames of the run. Scenario input renders the bundled synthetic stream;
    replay input reads FRAMES_DIR, or uses N_FRAMES blank frames when the
    replay script is all the run needs.
    """
    if run_cfg.input_kind is InputKind.SCENARIO:
        scenario = bundled_scenario(seed=run_cfg.seed, n_frames=run_cfg.n_frames)
        return list(scenario.frames), scenario
    if run_cfg.frames_dir:
        return read_frames(run_cfg.frames_dir), None
    return _blank_frames(run_cfg.n_frames, run_cfg.fusion.image_size), None


def _header(run_cfg: RunConfig, logger: LoggingService) -> Dict[str, Any]:
    return {
        "trace_id": logger.trace_id,
        "backend": Config.BACKEND,
        "input": run_cfg.input_kind.value,
        "seed": run_cfg.seed,
        "fusion": run_cfg.fusion.model_dump(mode="json"),
        "windows": run_cfg.windows.model_dump(mode="json"),
    }


def _prepare(config_path: str, overrides: Optional[Mapping[str, Any]], logger: LoggingService,
             allow_empty: bool = False):
    run_cfg = load_run_config(config_path, overrides)
    frames, scenario = load_inputs(run_cfg)
    try:
        windows = generate(run_cfg.windows, len(frames))
    except VideoTooShort as e:
        if not allow_empty:
            raise
        logger.warning("Stream too short for a single window.", context={"error": str(e)})
        windows = []
    logger.info(
        "Inputs prepared.",
        context={"frames": len(frames), "windows": len(windows), "mode": run_cfg.fusion.mode.value,
                 "generator": run_cfg.windows.mode.value},
    )
    return run_cfg, frames, scenario, windows


def _scenario_evaluation(run_cfg: RunConfig, scenario: Scenario, windows: Sequence[SequenceWindow], alerts):
    labels = {w.window_id: scenario.window_label(w) for w in windows}
    mode = EvalMode.PER_VIDEO if run_cfg.windows.mode is GeneratorMode.DYNAMIC_STEP else EvalMode.PER_SEQUENCE
    return evaluate_alerts(alerts, labels, mode, windows, run_cfg.fusion.class_mode)


def cmd_run(
        config_path: str,
        overrides: Optional[Mapping[str, Any]],
        logger: LoggingService,
        store: Optional[ReportStore] = None,
        out: Optional[TextIO] = None,
) -> Dict[str, Any]:
    """Runs the configured pipeline, streams one JSON alert per line and writes the report."""
    out = out or sys.stdout
    run_cfg, frames, scenario, windows = _prepare(config_path, overrides, logger)
    detector, classifier = build_backends(run_cfg, windows, scenario, logger)
    try:
        alerts = run_pipeline(frames, windows, detector, classifier, run_cfg.fusion, logger)
    finally:
        _close_backends(detector, classifier)

    for line in alerts_jsonl(alerts):
        out.write(line + "\n")
    out.flush()

    report: Dict[str, Any] = {
        "header": _header(run_cfg, logger),
        "alerts": [alert_record(a) for a in alerts],
    }
    if scenario is not None:
        report["evaluation"] = evaluation_payload(_scenario_evaluation(run_cfg, scenario, windows, alerts))

    if run_cfg.report_path:
        write_json(run_cfg.report_path, report)
        write_csv(os.path.splitext(run_cfg.report_path)[0] + "_alerts.csv", alerts_frame(alerts))
        logger.info("Run report written.", context={"path": run_cfg.report_path, "alerts": len(alerts)})
    _persist(store, "run", report, logger)
    return report


def build_eval_config(flags: Mapping[str, Any]) -> EvalConfig:
    """EvalConfig from command-line values; None means default."""
    try:
        return EvalConfig(**{k: v for k, v in flags.items() if v is not None})
    except ValidationError as e:
        raise ConfigurationError(f"Invalid evaluation flags: {e}") from e


def cmd_eval(
        gt_path: str,
        pred_path: str,
        eval_cfg: EvalConfig,
        logger: LoggingService,
        report_path: Optional[str] = None,
        csv_path: Optional[str] = None,
        store: Optional[ReportStore] = None,
        out: Optional[TextIO] = None,
) -> Dict[str, Any]:
    """Matches predicted boxes against ground truth and reports the badBox table."""
    out = out or sys.stdout
    gt = load_detections(gt_path, ignore_confidence=True)
    preds = load_detections(pred_path)
    report = match_detections(gt, preds, eval_cfg)
    payload = match_report_payload(report)

    total = report.total()
    logger.info("Detection evaluation finished.",
                context={"gt": total.gt_count, "tp": total.tp, "fp": total.fp,
                         "fn": total.fn, "badbox": total.badbox})

    if report_path:
        write_json(report_path, payload)
    if csv_path or report_path:
        write_csv(csv_path or os.path.splitext(report_path)[0] + ".csv", match_report_frame(report))
    out.write(match_report_frame(report).to_string(index=False) + "\n")
    out.flush()
    _persist(store, "eval", payload, logger)
    return payload


def cmd_bench(
        config_path: str,
        overrides: Optional[Mapping[str, Any]],
        logger: LoggingService,
        store: Optional[ReportStore] = None,
        out: Optional[TextIO] = None,
) -> Dict[str, Any]:
    """Times the configured pipeline window by window and prints the speed table."""
    out = out or sys.stdout
    run_cfg, frames, scenario, windows = _prepare(config_path, overrides, logger, allow_empty=True)
    detector, classifier = build_backends(run_cfg, windows, scenario, logger)

    def pipeline(stream, selected):
        return run_pipeline(stream, selected, detector, classifier, run_cfg.fusion)

    try:
        timing = bench(pipeline, frames, windows, fps=run_cfg.windows.fps,
                       mode=run_cfg.fusion.mode.value, logger=logger)
    finally:
        _close_backends(detector, classifier)

    payload = {"header": _header(run_cfg, logger), "timing": timing_payload(timing)}
    out.write(timing.table().to_string(index=False) + "\n")
    out.flush()
    if run_cfg.report_path:
        write_json(run_cfg.report_path, payload)
    _persist(store, "bench", payload, logger)
    return payload


def cmd_explain(
        frames_dir: str,
        heatmaps_path: str,
        out_dir: str,
        logger: LoggingService,
        alpha: float = Config.DEFAULT_OVERLAY_ALPHA,
        level: float = Config.DEFAULT_CONTOUR_LEVEL,
        levels: Sequence[float] = (),
        store: Optional[ReportStore] = None,
) -> Dict[str, Any]:
    """
    Writes one overlay image per heatmap (PPM; a grey frame rendered at alpha 0
    stays PGM) plus contours.json. Heatmaps are paired with frames by frame
    index.
    """
    frames = {f.index: f for f in read_frames(frames_dir)}
    heatmaps = load_heatmaps(heatmaps_path)
    missing = [h.frame_index for h in heatmaps if h.frame_index not in frames]
    if missing:
        raise FrameNotFound(f"Heatmaps reference frames missing from {frames_dir}: {missing[:10]}")

    paired = [frames[h.frame_index] for h in heatmaps]
    rendered = map_series(paired, heatmaps, alpha, level)
    write_frames(out_dir, [overlay_frame for overlay_frame, _ in rendered], prefix="overlay")

    series = [(frame.index, found) for frame, (_, found) in zip(paired, rendered)]
    write_contours(os.path.join(out_dir, "contours.json"), series)

    payload: Dict[str, Any] = {
        "frames": len(rendered),
        "alpha": alpha,
        "level": level,
        "contours": {str(frame_index): len(found) for frame_index, found in series},
    }
    if levels:
        payload["levels"] = {
            str(h.frame_index): {str(k): len(v) for k, v in contour_levels(normalize(h), levels).items()}
            for h in heatmaps
        }
    logger.info("Explainability overlays written.", context={"out_dir": out_dir, "frames": len(rendered)})
    write_json(os.path.join(out_dir, "explain_report.json"), payload)
    _persist(store, "explain", payload, logger)
    return payload
