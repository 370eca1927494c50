import sys
import uuid
from typing import Dict, NamedTuple, Optional, Tuple

from config.load_config import load_environment_config
from config.settings import Config
from models.errors import ConfigurationError
from services.logging_service import LoggingService
from services.report_store import ReportStore
from services.report_store_impl import ReportStoreImpl

# Exit code of a configuration failure, shared with argparse usage errors.
EXIT_USAGE = 2


class AppServices(NamedTuple):
    """Container for all initialized services and validated configuration parameters."""
    logger: LoggingService
    trace_id: str
    env_profile: str
    backend: str
    report_store: Optional[ReportStore]


def _setup_trace_and_logger() -> Tuple[str, LoggingService]:
    """
    Action 1: Generates a unique Trace ID and initializes the LoggingService instance.
    """
    trace_id = str(uuid.uuid4())
    logger = LoggingService(trace_id=trace_id)
    return trace_id, logger


def _load_and_validate_config(env_flag: str, config_dir: Optional[str]) -> Tuple[Dict[str, str], Optional[str]]:
    """
    Action 2: Loads the .env.<profile> file and retrieves the mandatory values.

    Returns the loaded values or an error message.
    """
    try:
        values = load_environment_config(env_flag, config_dir)
    except ConfigurationError as e:
        return {}, str(e)
    return values, None


def _open_report_store(logger: LoggingService) -> Optional[ReportStore]:
    """
    Action 3: Connects the report store when REPORT_DATABASE_URL is set.
    An unreachable database only disables persistence.
    """
    if not Config.REPORT_DATABASE_URL:
        logger.debug("No REPORT_DATABASE_URL configured; reports are not persisted.")
        return None

    store = ReportStore(ReportStoreImpl(Config.REPORT_DATABASE_URL))
    if not store.is_available:
        logger.warning("Report store unavailable; continuing without persistence.",
                       context={"database_url": Config.REPORT_DATABASE_URL})
        return None
    return store


def _execute_initialization_flow(
        env: str,
        trace_id: str,
        logger: LoggingService,
        config_dir: Optional[str] = None,
) -> Tuple[Optional[AppServices], Optional[str]]:
    """
    Orchestrates the sequence of setup actions and packages the successful result.
    """
    logger.debug("Starting initialization sequence.")

    # 1. Load Configuration
    values, config_error = _load_and_validate_config(env, config_dir)
    if config_error:
        return None, config_error

    logger.set_level(Config.LOG_LEVEL)
    logger.debug(f"Configuration loaded successfully in {Config.ENV_PROFILE} mode.",
                 context={"backend": Config.BACKEND})

    # 2. Report persistence (optional)
    report_store = _open_report_store(logger)

    # 3. Package and Return Services on Success
    services = AppServices(
        logger=logger,
        trace_id=trace_id,
        env_profile=values["ENV_PROFILE"],
        backend=Config.BACKEND,
        report_store=report_store,
    )
    return services, None


# ----------------------------------------------------------------------
# CONTROL MAIN INITIALIZATION LOGIC (Public Entry Point)
# ----------------------------------------------------------------------

def initialize_application_services(env_flag: str, config_dir: Optional[str] = None) -> AppServices:
    """
    Public entry point for mandatory startup processes.
    Executes the initialization flow and exits with the usage code on failure.
    """

    # 1. Setup Logger and Trace ID FIRST (to capture all subsequent events)
    trace_id, logger = _setup_trace_and_logger()

    # 2. Execute the sequence
    services, error_message = _execute_initialization_flow(env_flag, trace_id, logger, config_dir)

    # 3. Handle Critical Failure (sys.exit)
    if services is None:
        logger.critical_exception(
            "FATAL: Startup aborted due to an invalid environment profile.",
            ConfigurationError(error_message or "Unknown initialization error"),
        )
        sys.exit(EXIT_USAGE)

    return services
