import re
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import Config
from models.domain import GeneratorMode
from models.registry import NORMAL


class PipelineMode(str, Enum):
    SERIAL = "serial"
    PARALLEL = "parallel"


class RuleVariant(str, Enum):
    REDUCE_FALSE_NEGATIVES = "fn"
    REDUCE_FALSE_POSITIVES = "fp"


class ClassMode(str, Enum):
    MULTI_CLASS = "multiclass"
    BINARY = "binary"


class IouGate(str, Enum):
    PLAIN_IOU = "iou"
    DIOU = "diou"


class SerialPreprocess(str, Enum):
    DRAW_BOXES = "draw_boxes"
    MASK_BLACK = "mask_black"
    MASK_ORIGINAL = "mask_original"


class MaskBackground(str, Enum):
    BLACK = "black"
    ORIGINAL = "original"


class NmsKind(str, Enum):
    HARD = "hard"
    DIOU = "diou"


class ClassifierInput(str, Enum):
    """What the classifier receives per frame: the frame itself or its difference to the previous one."""

    RAW = "raw"
    DIFFERENCE = "difference"


AUGMENT_PATTERN = re.compile(r"^(mirror_h|brightness:[+-]?\d+|zoom:\d+(\.\d+)?)$")


def normalize_ratio(value):
    """
    Accepts 0..1 ratios or 0..100 percentages ("55" -> 0.55). A bare value
    of exactly 1 stays a ratio (100%); "1%" is the way to write one percent.
    """
    if value is None:
        return value
    if isinstance(value, str) and value.strip().endswith("%"):
        return float(value.strip()[:-1]) / 100.0
    value = float(value)
    if value > 1.0:
        value = value / 100.0
    return value


def _augment_list(value):
    if value is None or value == "":
        return ()
    items = value.split(",") if isinstance(value, str) else list(value)
    ops = tuple(item.strip().lower() for item in items if item.strip())
    for op in ops:
        if not AUGMENT_PATTERN.match(op):
            raise ValueError(f"Unknown augmentation '{op}' (mirror_h, brightness:<int>, zoom:<factor>).")
        if op.startswith("zoom:") and float(op[5:]) < 1.0:
            raise ValueError(f"Zoom factor must be >= 1: '{op}'.")
    return ops


class FusionConfig(BaseModel):
    """Settings of the serial/parallel pipelines and the correction rules."""

    model_config = ConfigDict(frozen=True)

    confidence_threshold: float = Field(default=Config.DEFAULT_CONFIDENCE_THRESHOLD, ge=0.0, le=1.0)
    iou_gate: IouGate = IouGate.PLAIN_IOU
    mode: PipelineMode = PipelineMode.PARALLEL
    rule_variant: RuleVariant = RuleVariant.REDUCE_FALSE_NEGATIVES
    class_mode: ClassMode = ClassMode.MULTI_CLASS
    sequence_length: int = Field(default=Config.DEFAULT_SEQUENCE_LENGTH, ge=2)
    frame_skip: int = Field(default=1, ge=1)
    image_size: int = Field(default=Config.DEFAULT_IMAGE_SIZE, ge=8)
    nms_overlap: float = Field(default=Config.DEFAULT_NMS_OVERLAP, ge=0.0, le=1.0)
    nms_kind: NmsKind = NmsKind.HARD
    diou_decay: float = Field(default=Config.DEFAULT_DIOU_NMS_DECAY, gt=0.0, lt=1.0)
    touch_counts: bool = False
    require_person_for_firearm: bool = True
    serial_preprocess: SerialPreprocess = SerialPreprocess.DRAW_BOXES
    fallback_label: str = NORMAL
    concurrent_backends: bool = True
    classifier_input: ClassifierInput = ClassifierInput.RAW
    augment: Tuple[str, ...] = ()

    @field_validator("confidence_threshold", "nms_overlap", mode="before")
    @classmethod
    def _percent_to_ratio(cls, value):
        return normalize_ratio(value)

    @field_validator("augment", mode="before")
    @classmethod
    def _parse_augment(cls, value):
        return _augment_list(value)


class EvalConfig(BaseModel):
    """Parameters of the detection-evaluation algorithm (badBox)."""

    model_config = ConfigDict(frozen=True)

    confidence_threshold: float = Field(default=Config.DEFAULT_CONFIDENCE_THRESHOLD, ge=0.0, le=1.0)
    nms_overlap: float = Field(default=Config.DEFAULT_NMS_OVERLAP, ge=0.0, le=1.0)
    nms_kind: NmsKind = NmsKind.HARD
    diou_decay: float = Field(default=Config.DEFAULT_DIOU_NMS_DECAY, gt=0.0, lt=1.0)
    iou_min: float = Field(default=0.0, ge=0.0, le=1.0)
    iou_max: float = Field(default=1.0, ge=0.0, le=1.0)
    min_box_size: float = Field(default=0.0, ge=0.0)

    @field_validator("confidence_threshold", "nms_overlap", "iou_min", "iou_max", mode="before")
    @classmethod
    def _percent_to_ratio(cls, value):
        return normalize_ratio(value)

    @model_validator(mode="after")
    def _ordered_bounds(self) -> "EvalConfig":
        if self.iou_min > self.iou_max:
            raise ValueError(f"iou_min ({self.iou_min}) must not exceed iou_max ({self.iou_max}).")
        return self


class WindowSpec(BaseModel):
    """
    Generator settings.

    `stride` defaults to the window span (non-overlapping windows),
    `target_count` to `window_len`. `step` forces the DynamicStep stride and
    `dilation` is the intra-window spacing of SlidingDynamic.
    """

    model_config = ConfigDict(frozen=True)

    mode: GeneratorMode = GeneratorMode.SLIDING
    window_len: int = Field(default=Config.DEFAULT_SEQUENCE_LENGTH, ge=2)
    stride: Optional[int] = Field(default=None, ge=1)
    overlap: int = Field(default=0, ge=0)
    target_count: Optional[int] = Field(default=None, ge=2)
    step: Optional[int] = Field(default=None, ge=1)
    dilation: int = Field(default=2, ge=1)
    fps: float = Field(default=30.0, gt=0)
    window_id_offset: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _overlap_below_length(self) -> "WindowSpec":
        if self.overlap >= self.window_len:
            raise ValueError(f"overlap ({self.overlap}) must be smaller than window_len ({self.window_len}).")
        return self

    @property
    def effective_target_count(self) -> int:
        return self.target_count or self.window_len


class InputKind(str, Enum):
    SCENARIO = "scenario"
    REPLAY = "replay"


class RunConfig(BaseModel):
    """Everything one `run` / `bench` invocation needs, parsed from a run-config file."""

    model_config = ConfigDict(frozen=True)

    fusion: FusionConfig = FusionConfig()
    evaluation: EvalConfig = EvalConfig()
    windows: WindowSpec = WindowSpec()
    input_kind: InputKind = InputKind.SCENARIO
    seed: int = 7
    n_frames: int = Field(default=600, ge=2)
    detections_path: Optional[str] = None
    verdicts_path: Optional[str] = None
    frames_dir: Optional[str] = None
    report_path: Optional[str] = None

    @model_validator(mode="after")
    def _replay_needs_detections(self) -> "RunConfig":
        if self.input_kind is InputKind.REPLAY and not self.detections_path:
            raise ValueError("INPUT=replay requires DETECTIONS_PATH.")
        return self
