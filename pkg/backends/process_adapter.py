"""
External-process inference backends.

A detector or classifier runtime is started as a child process and spoken to
with newline-delimited JSON over its stdin/stdout, one request line and one
response line at a time:

    -> {"v":1,"op":"detect","frame":7,"shape":[h,w,c],"pixels":"<base64>"}
    <- {"v":1,"ok":true,"detections":[{"class":"flame","conf":0.8,"box":[x,y,w,h]}]}

    -> {"v":1,"op":"classify","window":3,"frames":[{"frame":..,"shape":..,"pixels":..}, ...]}
    <- {"v":1,"ok":true,"dist":{"fight":0.1,...}}

A response with "ok": false carries an "error" string and is reported as a
BackendError without retrying. A process that exits, closes its pipe or goes
silent past the response timeout is restarted and the request replayed,
following RetryConfig.
"""

import base64
import json
import logging
import selectors
import shlex
import subprocess
import threading
import time
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from backends.replay_backend import PROTOCOL_VERSION, DetectionRecord, record_to_detection
from config.retry_config import RetryConfig
from models.domain import Detection, Frame, SequenceWindow, Verdict
from models.errors import BackendError, ConfigurationError
from models.registry import ClassRegistry, default_anomaly_registry, default_object_registry

logger = logging.getLogger("ProcessAdapter")


class _ProcessDied(Exception):
    pass


def encode_frame(frame: Frame) -> Dict[str, Any]:
    return {
        "frame": frame.index,
        "shape": list(frame.shape),
        "pixels": base64.b64encode(frame.pixels.tobytes()).decode("ascii"),
    }


class ProcessBackend:
    """
    One long-lived child process. Calls are serialized with a lock, so the
    backend declares itself single-threaded.
    """

    thread_safe = False

    def __init__(self, command: Union[str, Sequence[str]], retry_config: type = RetryConfig):
        if not command:
            raise ConfigurationError("An external-process backend needs a command line.")
        self.command: List[str] = shlex.split(command) if isinstance(command, str) else list(command)
        self.retry_config = retry_config
        self._lock = threading.Lock()
        self._process: Optional[subprocess.Popen] = None
        self.restarts = 0

    def _start(self) -> subprocess.Popen:
        logger.info("Starting backend process: %s", " ".join(self.command))
        try:
            return subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as e:
            raise BackendError(f"Cannot start backend process {self.command[0]!r}: {e}") from e

    def _ensure_started(self) -> subprocess.Popen:
        if self._process is None or self._process.poll() is not None:
            self._process = self._start()
        return self._process

    def _exchange(self, line: bytes) -> Dict[str, Any]:
        process = self._ensure_started()
        try:
            process.stdin.write(line)
            process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise _ProcessDied(f"write failed: {e}") from e

        with selectors.DefaultSelector() as selector:
            selector.register(process.stdout, selectors.EVENT_READ)
            if not selector.select(timeout=self.retry_config.RESPONSE_TIMEOUT_SECONDS):
                raise _ProcessDied("response timeout")
        response = process.stdout.readline()
        if not response:
            raise _ProcessDied("process closed its output")
        try:
            payload = json.loads(response)
        except json.JSONDecodeError as e:
            raise BackendError(f"Backend answered with invalid JSON: {e.msg}") from e
        if not isinstance(payload, dict) or payload.get("v") != PROTOCOL_VERSION:
            raise BackendError(f"Backend answered with an unsupported message: {response[:80]!r}")
        return payload

    def request(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        """Sends one request, restarting the process with backoff when it dies."""
        line = (json.dumps({"v": PROTOCOL_VERSION, **payload}) + "\n").encode("utf-8")
        delays = self.retry_config.get_backoff_delays()
        with self._lock:
            for attempt in range(len(delays) + 1):
                try:
                    response = self._exchange(line)
                    break
                except _ProcessDied as e:
                    self._kill()
                    if attempt == len(delays):
                        raise BackendError(
                            f"Backend process failed after {len(delays)} restarts: {e}"
                        ) from e
                    logger.warning("Backend process lost (%s); restarting in %.2fs", e, delays[attempt])
                    time.sleep(delays[attempt])
                    self.restarts += 1

        if not response.get("ok", False):
            raise BackendError(f"Backend reported an error: {response.get('error', 'unknown error')}")
        return response

    def _kill(self) -> None:
        if self._process is None:
            return
        try:
            self._process.kill()
            self._process.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            pass
        self._process = None

    def close(self) -> None:
        with self._lock:
            if self._process is not None and self._process.poll() is None:
                try:
                    self._process.stdin.close()
                    self._process.wait(timeout=2)
                except (OSError, subprocess.TimeoutExpired):
                    pass
            self._kill()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


class ProcessDetector(ProcessBackend):
    def __init__(self, command, registry: Optional[ClassRegistry] = None, retry_config: type = RetryConfig):
        super().__init__(command, retry_config)
        self.registry = registry or default_object_registry()

    def detect(self, frame: Frame) -> List[Detection]:
        response = self.request({"op": "detect", **encode_frame(frame)})
        out: List[Detection] = []
        for item in response.get("detections", []):
            try:
                record = DetectionRecord.model_validate({"v": PROTOCOL_VERSION, "frame": frame.index, **item})
            except ValidationError as e:
                raise BackendError(f"Malformed detection from backend: {e.errors()[0]['msg']}") from e
            # Detections always belong to the queried frame.
            record = record.model_copy(update={"frame": frame.index})
            out.append(record_to_detection(record, self.registry))
        return out


class ProcessClassifier(ProcessBackend):
    def __init__(self, command, registry: Optional[ClassRegistry] = None, retry_config: type = RetryConfig):
        super().__init__(command, retry_config)
        self.registry = registry or default_anomaly_registry()

    def classify(self, frames: Sequence[Frame], window: SequenceWindow) -> Verdict:
        response = self.request({
            "op": "classify",
            "window": window.window_id,
            "frames": [encode_frame(frame) for frame in frames],
        })
        dist = response.get("dist")
        if not isinstance(dist, dict):
            raise BackendError("Backend classify response has no 'dist' map.")
        try:
            return Verdict.from_distribution(window.window_id, dist, self.registry)
        except ValidationError as e:
            raise BackendError(f"Backend distribution rejected: {e.errors()[0]['msg']}") from e
