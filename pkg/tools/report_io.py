"""JSON and CSV serialization of alerts and reports."""

import json
import os
from typing import Any, Dict, List, Sequence

import pandas as pd

from models.domain import Alert
from services.bench_service import TimingReport
from services.evaluation_service import AlertEvaluation, MatchReport


def alert_record(alert: Alert) -> Dict[str, Any]:
    return {
        "window": alert.window_id,
        "final": alert.final_class,
        "original": alert.original_class,
        "rule": alert.rule_fired.value,
        "support": len(alert.supporting_detections),
    }


def match_report_frame(report: MatchReport) -> pd.DataFrame:
    rows = []
    for row in list(report.rows) + [report.total()]:
        record = row.model_dump(exclude={"prf"})
        record.update({"precision": row.prf.precision, "recall": row.prf.recall, "f1": row.prf.f1})
        rows.append(record)
    return pd.DataFrame(rows)


def match_report_payload(report: MatchReport) -> Dict[str, Any]:
    """The evaluation settings go into the header so a report documents its own run."""
    return {
        "header": report.config.model_dump(mode="json"),
        "rows": match_report_frame(report).to_dict(orient="records"),
    }


def evaluation_payload(evaluation: AlertEvaluation) -> Dict[str, Any]:
    return evaluation.model_dump(mode="json")


def timing_payload(report: TimingReport) -> Dict[str, Any]:
    payload = report.model_dump(mode="json")
    payload["video_duration_s"] = report.video_duration_s
    payload["table"] = report.table().to_dict(orient="records")
    return payload


def write_json(path: str, payload: Dict[str, Any]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=False)


def write_csv(path: str, frame: pd.DataFrame) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False)


def alerts_frame(alerts: Sequence[Alert]) -> pd.DataFrame:
    return pd.DataFrame([alert_record(a) for a in alerts], columns=["window", "final", "original", "rule", "support"])


def alerts_jsonl(alerts: Sequence[Alert]) -> List[str]:
    return [json.dumps({"v": 1, **alert_record(a)}) for a in alerts]
