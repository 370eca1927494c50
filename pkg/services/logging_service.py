import logging
import sys
from typing import Any, Dict, Optional

from config.settings import Config

# Basic Python logger configuration. Logs go to stderr so that stdout stays
# free for the alert stream and reports printed by the command line.
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(levelname)s - %(message)s",
    stream=sys.stderr,
)


class LoggingService:
    """
    Service layer to handle all logging and exception reporting for the application.
    """

    def __init__(self, trace_id: Optional[str] = None, level: Optional[str] = None):
        """
        Initializes the service. The 'trace_id' ties together every line of one
        pipeline run (one CLI invocation).
        """
        self.trace_id = trace_id
        self.logger = logging.getLogger(Config.APP_NAME)
        self.set_level(level or Config.LOG_LEVEL)

    def set_level(self, level: str) -> None:
        self.logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))

    def _format_message(self, message: str, context: Optional[Dict[str, Any]] = None) -> str:
        """
        Formats the message for structured logging: trace id first, then the
        operational context (window id, mode, counts...) merged into one dict.
        """
        log_data: Dict[str, Any] = {"message": message}
        if self.trace_id:
            log_data["trace_id"] = self.trace_id
        if context:
            log_data.update(context)

        return f"[{self.trace_id or 'NO_TRACE'}] {message} - Context: {log_data}"

    def info(self, message: str, context: Optional[Dict[str, Any]] = None):
        """Logs general progress (pipeline started, report written)."""
        self.logger.info(self._format_message(message, context))

    def debug(self, message: str, context: Optional[Dict[str, Any]] = None):
        """
        Logs per-window details (verdicts, pooled detection counts, timings).
        Verbose; enabled by LOG_LEVEL=DEBUG in the test profile.
        """
        self.logger.debug(self._format_message(message, context))

    def warning(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.logger.warning(self._format_message(message, context))

    def error(self, message: str, context: Optional[Dict[str, Any]] = None):
        """Logs non-recoverable errors (bad input file, backend failure)."""
        self.logger.error(self._format_message(message, context))

    def critical_exception(self, message: str, exception: Exception, context: Optional[Dict[str, Any]] = None):
        """
        Logs a fatal failure with its traceback. The exception type and text are
        added to the context so the line is useful without the traceback.
        """
        merged = {"error_type": type(exception).__name__, "error": str(exception)}
        if context:
            merged.update(context)
        self.logger.critical(self._format_message(message, merged), exc_info=exception)
