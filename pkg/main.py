import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from models.errors import DATA_ERRORS, USAGE_ERRORS
from services.command_service import build_eval_config, cmd_bench, cmd_eval, cmd_explain, cmd_run
from services.initialization_service import initialize_application_services

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2

CONF_HELP = ("Confidence threshold, ratio or percent (55 = 0.55). Values above 1 are percentages, "
             "so 1 means 100%%; write 0.01 for one percent.")


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="Run-config file (flat KEY=VALUE).")
    parser.add_argument("--mode", choices=["serial", "parallel"])
    parser.add_argument("--rule", choices=["fn", "fp"], help="Correction variant: reduce false negatives or positives.")
    parser.add_argument("--binary", action="store_true", help="Collapse labels to abnormal/normal.")
    parser.add_argument("--conf", type=float, help=CONF_HELP)
    parser.add_argument("--nms-overlap", type=float)
    parser.add_argument("--nms-kind", choices=["hard", "diou"], help="Hard IoU NMS or score-decay DIoU-NMS.")
    parser.add_argument("--diou-decay", type=float, help="Confidence factor applied by DIoU-NMS (0 < decay < 1).")
    parser.add_argument("--classifier-input", choices=["raw", "difference"],
                        help="Feed the classifier raw frames or differences of successive frames.")
    parser.add_argument("--augment", help="Comma-separated classifier-input augmentations, e.g. mirror_h,zoom:1.2.")
    parser.add_argument("--iou-min", type=float)
    parser.add_argument("--iou-max", type=float)
    parser.add_argument("--min-box", type=float)
    parser.add_argument("--frame-skip", type=int)
    parser.add_argument("--seq-len", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--report", help="Write the JSON report here.")


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--conf", type=float, default=55, help=CONF_HELP + " Default 55.")
    parser.add_argument("--nms-overlap", type=float, default=70, help="NMS overlap threshold (default 70%%).")
    parser.add_argument("--nms-kind", choices=["hard", "diou"], default="hard")
    parser.add_argument("--diou-decay", type=float, help="Confidence factor applied by DIoU-NMS (0 < decay < 1).")
    parser.add_argument("--iou-min", type=float, default=0)
    parser.add_argument("--iou-max", type=float, default=100)
    parser.add_argument("--min-box", type=float, default=0, help="Minimum predicted box side in pixels.")
    parser.add_argument("--report", help="Write the JSON report here (a CSV is written next to it).")
    parser.add_argument("--csv", help="Write the CSV table here.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anomaly-fusion",
        description="Spatio-temporal anomaly detection: fusion runs, detection evaluation, "
                    "latency benchmarks and attention-map rendering.",
    )
    parser.add_argument("--profile", default=os.environ.get("ENV_PROFILE", "dev"),
                        help="Environment profile, loads config/.env.<profile> (default: dev).")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_pipeline_flags(commands.add_parser("run", help="Run the serial or parallel pipeline."))
    _add_pipeline_flags(commands.add_parser("bench", help="Time the pipeline per window."))

    eval_parser = commands.add_parser("eval", help="Evaluate predicted boxes against ground truth.")
    eval_parser.add_argument("gt", help="Ground-truth detection JSONL (confidence ignored).")
    eval_parser.add_argument("pred", help="Predicted detection JSONL.")
    _add_eval_flags(eval_parser)

    explain_parser = commands.add_parser("explain", help="Render heatmap overlays and contours.")
    explain_parser.add_argument("frames", help="Directory of PGM/PPM frames.")
    explain_parser.add_argument("heatmaps", help="Heatmap JSONL.")
    explain_parser.add_argument("--out", required=True, help="Output directory.")
    explain_parser.add_argument("--alpha", type=float, default=0.4)
    explain_parser.add_argument("--level", type=float, default=0.5)
    explain_parser.add_argument("--levels", type=float, nargs="*", default=[])
    return parser


def pipeline_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Command-line flags as run-config keys; unset flags are left to the file."""
    overrides: Dict[str, Any] = {
        "MODE": args.mode,
        "RULE_VARIANT": args.rule,
        "CLASS_MODE": "binary" if args.binary else None,
        "CONFIDENCE_THRESHOLD": args.conf,
        "NMS_OVERLAP": args.nms_overlap,
        "NMS_KIND": args.nms_kind,
        "DIOU_DECAY": args.diou_decay,
        "CLASSIFIER_INPUT": args.classifier_input,
        "AUGMENT": args.augment,
        "IOU_MIN": args.iou_min,
        "IOU_MAX": args.iou_max,
        "MIN_BOX_SIZE": args.min_box,
        "FRAME_SKIP": args.frame_skip,
        "SEQUENCE_LENGTH": args.seq_len,
        "SEED": args.seed,
        "REPORT_PATH": os.path.abspath(args.report) if args.report else None,
    }
    return {key: value for key, value in overrides.items() if value is not None}


def run_command(args: argparse.Namespace) -> int:
    # 1. Initialization (Config, Logger, Trace ID, report store)
    services = initialize_application_services(args.profile)
    logger = services.logger
    store = services.report_store
    logger.info(f"Command '{args.command}' started.", context={"profile": services.env_profile})

    # 2. Command execution, errors mapped to exit codes
    try:
        if args.command == "run":
            cmd_run(args.config, pipeline_overrides(args), logger, store)
        elif args.command == "bench":
            cmd_bench(args.config, pipeline_overrides(args), logger, store)
        elif args.command == "eval":
            eval_cfg = build_eval_config({
                "confidence_threshold": args.conf,
                "nms_overlap": args.nms_overlap,
                "nms_kind": args.nms_kind,
                "diou_decay": args.diou_decay,
                "iou_min": args.iou_min,
                "iou_max": args.iou_max,
                "min_box_size": args.min_box,
            })
            cmd_eval(args.gt, args.pred, eval_cfg, logger, args.report, args.csv, store)
        else:
            cmd_explain(args.frames, args.heatmaps, args.out, logger,
                        alpha=args.alpha, level=args.level, levels=args.levels, store=store)
    except USAGE_ERRORS as e:
        logger.critical_exception("Invalid configuration or parameter.", e, context={"command": args.command})
        return EXIT_USAGE_ERROR
    except DATA_ERRORS as e:
        logger.critical_exception("Input data rejected.", e, context={"command": args.command})
        return EXIT_DATA_ERROR
    except OSError as e:
        logger.critical_exception("Input or output file unavailable.", e, context={"command": args.command})
        return EXIT_DATA_ERROR

    logger.info(f"Command '{args.command}' completed.")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
