from typing import Final, List


class RetryConfig:
    """
    Restart policy for external-process inference backends.

    A backend process that dies or closes its pipe is restarted and the
    request replayed, with exponential backoff between attempts.
    """

    # Max number of restarts for one request
    MAX_RETRIES: Final[int] = 3

    # Initial delay in seconds before the first restart
    INITIAL_DELAY_SECONDS: Final[float] = 0.1

    # Exponential base multiplier for delay calculation
    EXPONENTIAL_BASE: Final[int] = 2

    # Seconds to wait for one response line before the process is considered hung.
    RESPONSE_TIMEOUT_SECONDS: Final[float] = 30.0

    @classmethod
    def get_backoff_delays(cls) -> List[float]:
        """Delay before each restart attempt: initial, initial*base, initial*base^2, ..."""
        return [cls.INITIAL_DELAY_SECONDS * (cls.EXPONENTIAL_BASE ** attempt) for attempt in range(cls.MAX_RETRIES)]
