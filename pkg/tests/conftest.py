import numpy as np
import pytest

from config.settings import Config
from models.domain import BoundingBox, Detection, Frame
from models.registry import default_anomaly_registry, default_object_registry
from services.logging_service import LoggingService

MOCK_TRACE_ID = "test-fusion-trace"


@pytest.fixture(scope="session")
def test_logger():
    """Provides a dedicated LoggingService instance for test use."""
    return LoggingService(trace_id=MOCK_TRACE_ID, level="DEBUG")


@pytest.fixture
def anomaly_registry():
    return default_anomaly_registry()


@pytest.fixture
def object_registry():
    return default_object_registry()


def make_det(object_class, x, y, w, h, conf=0.9, frame=0):
    """Shorthand used across the test modules."""
    return Detection(
        box=BoundingBox(x=x, y=y, w=w, h=h),
        object_class=object_class,
        confidence=conf,
        frame_index=frame,
    )


def make_frames(n, height=24, width=32, value=60, channels=3):
    return [Frame(index=i, pixels=np.full((height, width, channels), value, dtype=np.uint8)) for i in range(n)]


@pytest.fixture
def det_factory():
    return make_det


@pytest.fixture
def frame_factory():
    return make_frames


PROFILE_ATTRIBUTES = ("ENV_PROFILE", "LOG_LEVEL", "BACKEND", "REPORT_DATABASE_URL",
                      "DETECTOR_COMMAND", "CLASSIFIER_COMMAND")


@pytest.fixture
def clean_environment(monkeypatch):
    """
    Drops profile variables exported by the shell and restores the Config
    class attributes a profile load overwrites.
    """
    for name in PROFILE_ATTRIBUTES:
        monkeypatch.delenv(name, raising=False)
        monkeypatch.setattr(Config, name, getattr(Config, name))
    yield Config
