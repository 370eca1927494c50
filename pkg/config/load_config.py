import logging
import os
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from config.required_vars import REQUIRED_RUN_KEYS, REQUIRED_VARS
from config.settings import Config
from models.config_models import EvalConfig, FusionConfig, RunConfig, WindowSpec
from models.errors import ConfigurationError

logger = logging.getLogger("AnomalyFusionConfig")

# Run-config key -> (section, field name)
RUN_KEY_MAP: Dict[str, tuple] = {
    "MODE": ("fusion", "mode"),
    "RULE_VARIANT": ("fusion", "rule_variant"),
    "CLASS_MODE": ("fusion", "class_mode"),
    "CONFIDENCE_THRESHOLD": ("fusion", "confidence_threshold"),
    "IOU_GATE": ("fusion", "iou_gate"),
    "SEQUENCE_LENGTH": ("fusion", "sequence_length"),
    "FRAME_SKIP": ("fusion", "frame_skip"),
    "IMAGE_SIZE": ("fusion", "image_size"),
    "NMS_OVERLAP": ("fusion", "nms_overlap"),
    "NMS_KIND": ("fusion", "nms_kind"),
    "DIOU_DECAY": ("fusion", "diou_decay"),
    "TOUCH_COUNTS": ("fusion", "touch_counts"),
    "REQUIRE_PERSON_FOR_FIREARM": ("fusion", "require_person_for_firearm"),
    "SERIAL_PREPROCESS": ("fusion", "serial_preprocess"),
    "FALLBACK_LABEL": ("fusion", "fallback_label"),
    "CONCURRENT_BACKENDS": ("fusion", "concurrent_backends"),
    "CLASSIFIER_INPUT": ("fusion", "classifier_input"),
    "AUGMENT": ("fusion", "augment"),
    "IOU_MIN": ("evaluation", "iou_min"),
    "IOU_MAX": ("evaluation", "iou_max"),
    "MIN_BOX_SIZE": ("evaluation", "min_box_size"),
    "GENERATOR": ("windows", "mode"),
    "WINDOW_STRIDE": ("windows", "stride"),
    "WINDOW_OVERLAP": ("windows", "overlap"),
    "TARGET_COUNT": ("windows", "target_count"),
    "DYNAMIC_STEP": ("windows", "step"),
    "DILATION": ("windows", "dilation"),
    "FPS": ("windows", "fps"),
    "INPUT": ("run", "input_kind"),
    "SEED": ("run", "seed"),
    "N_FRAMES": ("run", "n_frames"),
    "DETECTIONS_PATH": ("run", "detections_path"),
    "VERDICTS_PATH": ("run", "verdicts_path"),
    "FRAMES_DIR": ("run", "frames_dir"),
    "REPORT_PATH": ("run", "report_path"),
}
PATH_KEYS = {"DETECTIONS_PATH", "VERDICTS_PATH", "FRAMES_DIR", "REPORT_PATH"}
LOWERCASE_FIELDS = {
    "mode", "rule_variant", "class_mode", "iou_gate", "nms_kind", "serial_preprocess",
    "classifier_input", "input_kind", "fallback_label",
}


def load_environment_config(env_flag: str, config_dir: Optional[str] = None) -> Dict[str, str]:
    """
    Loads the .env.<env_flag> profile and assigns its values to Config.
    Validates that all variables declared in REQUIRED_VARS are present.

    Variables already exported in the process environment win over the file,
    the same precedence load_dotenv applies without override.

    Raises:
        ConfigurationError: the profile file is missing or incomplete.
    """
    env_file = f".env.{env_flag}"
    env_path = os.path.join(config_dir or os.path.dirname(__file__), env_file)

    if not os.path.exists(env_path):
        raise ConfigurationError(f"Environment file not found for profile '{env_flag}'. Expected at: {env_path}")

    values = {k: v for k, v in dotenv_values(env_path).items() if v is not None}
    for key in list(values) + REQUIRED_VARS:
        if key in os.environ:
            values[key] = os.environ[key]
    logger.debug("Configuration loaded from %s", env_file)

    missing_vars = [var for var in REQUIRED_VARS if not values.get(var)]
    if missing_vars:
        raise ConfigurationError(
            "The following required environment variables are missing: " + ", ".join(missing_vars)
        )

    apply_environment(values)
    return values


def apply_environment(values: Mapping[str, str]) -> None:
    """Copies validated profile values onto the passive Config container."""
    Config.ENV_PROFILE = values["ENV_PROFILE"]
    Config.LOG_LEVEL = values.get("LOG_LEVEL", "INFO").upper()
    Config.BACKEND = values.get("BACKEND", "replay").lower()
    Config.REPORT_DATABASE_URL = values.get("REPORT_DATABASE_URL") or None
    Config.DETECTOR_COMMAND = values.get("DETECTOR_COMMAND") or None
    Config.CLASSIFIER_COMMAND = values.get("CLASSIFIER_COMMAND") or None


def _coerce(value: str) -> Any:
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    return value.strip()


def load_run_config(config_path: str, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Parses a flat KEY=VALUE run-config file into a RunConfig.

    `overrides` uses the same upper-case keys and takes precedence over the
    file (this is how command-line flags are layered on top). Relative paths
    are resolved against the directory of the config file.

    Raises:
        ConfigurationError: missing file, unknown key, missing required key
        or a value rejected by the config models.
    """
    if not os.path.isfile(config_path):
        raise ConfigurationError(f"Run configuration not found: {config_path}")

    raw: Dict[str, Any] = {k.upper(): v for k, v in dotenv_values(config_path).items() if v not in (None, "")}
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key.upper()] = value

    unknown = sorted(set(raw) - set(RUN_KEY_MAP))
    if unknown:
        raise ConfigurationError(f"Unknown run-config keys: {', '.join(unknown)}")
    missing = [key for key in REQUIRED_RUN_KEYS if key not in raw]
    if missing:
        raise ConfigurationError(f"Run configuration is missing required keys: {', '.join(missing)}")

    base_dir = os.path.dirname(os.path.abspath(config_path))
    sections: Dict[str, Dict[str, Any]] = {"fusion": {}, "evaluation": {}, "windows": {}, "run": {}}
    for key, value in raw.items():
        section, field_name = RUN_KEY_MAP[key]
        if isinstance(value, str):
            value = _coerce(value)
        if key in PATH_KEYS and isinstance(value, str) and not os.path.isabs(value):
            value = os.path.join(base_dir, value)
        if isinstance(value, str) and field_name in LOWERCASE_FIELDS:
            value = value.lower()
        sections[section][field_name] = value

    # The evaluation shares the detector thresholds of the fusion section.
    for shared in ("confidence_threshold", "nms_overlap", "nms_kind", "diou_decay"):
        if shared in sections["fusion"]:
            sections["evaluation"].setdefault(shared, sections["fusion"][shared])
    sections["windows"].setdefault("window_len", sections["fusion"].get("sequence_length", Config.DEFAULT_SEQUENCE_LENGTH))

    try:
        return RunConfig(
            fusion=FusionConfig(**sections["fusion"]),
            evaluation=EvalConfig(**sections["evaluation"]),
            windows=WindowSpec(**sections["windows"]),
            **sections["run"],
        )
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run configuration {config_path}: {e}") from e
