from typing import Final, Optional


class Config:
    """
    Passive container class for all application settings.
    Profile values are assigned ONLY after environment loading succeeds
    (see load_config.apply_environment). The DEFAULT_* constants are the
    default operating points and are safe to read at import time.
    """
    # --- PROFILE VALUES (assigned after .env.<profile> is loaded) ---
    ENV_PROFILE: Optional[str] = None
    LOG_LEVEL: str = "INFO"
    BACKEND: str = "replay"
    REPORT_DATABASE_URL: Optional[str] = None
    DETECTOR_COMMAND: Optional[str] = None
    CLASSIFIER_COMMAND: Optional[str] = None

    # --- PIPELINE DEFAULTS ---
    # Confidence threshold of 55% used for every key-object check.
    DEFAULT_CONFIDENCE_THRESHOLD: Final[float] = 0.55
    # 20-image sequences of 112x112 images were the best operating point.
    DEFAULT_SEQUENCE_LENGTH: Final[int] = 20
    DEFAULT_IMAGE_SIZE: Final[int] = 112
    # "Threshold 70%" of the detection evaluation runs, read as NMS overlap.
    DEFAULT_NMS_OVERLAP: Final[float] = 0.7
    DEFAULT_DIOU_NMS_DECAY: Final[float] = 0.1
    DEFAULT_FPS: Final[float] = 30.0

    # Explainability rendering
    DEFAULT_OVERLAY_ALPHA: Final[float] = 0.4
    DEFAULT_CONTOUR_LEVEL: Final[float] = 0.5

    APP_NAME: Final[str] = "AnomalyFusion"

    @staticmethod
    def is_test_mode() -> bool:
        """Returns True if the ENV_PROFILE indicates the deterministic testing environment."""
        return Config.ENV_PROFILE == "test"
