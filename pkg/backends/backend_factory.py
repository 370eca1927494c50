from types import MappingProxyType
from typing import Optional, Sequence, Tuple

from backends.contracts import Classifier, Detector
from backends.process_adapter import ProcessClassifier, ProcessDetector
from backends.replay_backend import ReplayClassifier, ReplayDetector, ReplayScript, load_replay
from config.settings import Config
from models.config_models import InputKind, RunConfig
from models.domain import SequenceWindow
from models.errors import ConfigurationError
from services.logging_service import LoggingService
from tools.scenario_generator import Scenario
from tools.simulated_backends import scenario_backends

REPLAY_BACKEND = "replay"
PROCESS_BACKEND = "process"


def _replay_script(run_cfg: RunConfig) -> ReplayScript:
    script = load_replay(run_cfg.detections_path)
    if run_cfg.verdicts_path and run_cfg.verdicts_path != run_cfg.detections_path:
        verdicts = load_replay(run_cfg.verdicts_path)
        merged = dict(script.verdicts)
        merged.update(verdicts.verdicts)
        script = ReplayScript(detections=script.detections, verdicts=MappingProxyType(merged))
    return script


def build_backends(
    run_cfg: RunConfig,
    windows: Sequence[SequenceWindow],
    scenario: Optional[Scenario] = None,
    logger: Optional[LoggingService] = None,
) -> Tuple[Detector, Classifier]:
    """
    Selects the detector/classifier pair from Config.BACKEND.

    "process" starts the external runtimes named by DETECTOR_COMMAND and
    CLASSIFIER_COMMAND. "replay" reads the run's replay files, or scripts
    the backends from the synthetic scenario when the input is a scenario.
    """
    backend = (Config.BACKEND or REPLAY_BACKEND).lower()

    if backend == PROCESS_BACKEND:
        if not Config.DETECTOR_COMMAND or not Config.CLASSIFIER_COMMAND:
            raise ConfigurationError("BACKEND=process requires DETECTOR_COMMAND and CLASSIFIER_COMMAND.")
        if logger:
            logger.info("Using external-process backends.",
                        context={"detector": Config.DETECTOR_COMMAND, "classifier": Config.CLASSIFIER_COMMAND})
        return ProcessDetector(Config.DETECTOR_COMMAND), ProcessClassifier(Config.CLASSIFIER_COMMAND)

    if backend != REPLAY_BACKEND:
        raise ConfigurationError(f"Unknown BACKEND '{backend}'. Expected '{REPLAY_BACKEND}' or '{PROCESS_BACKEND}'.")

    if run_cfg.input_kind is InputKind.REPLAY:
        script = _replay_script(run_cfg)
        if logger:
            logger.info("Using replay backends.",
                        context={"frames": len(script.detections), "windows": len(script.verdicts)})
        return ReplayDetector(script), ReplayClassifier(script, run_cfg.fusion.fallback_label)

    if scenario is None:
        raise ConfigurationError("Scenario input selected but no scenario was generated.")
    if logger:
        logger.info("Using scenario-scripted backends.", context={"windows": len(windows)})
    return scenario_backends(scenario, windows)
