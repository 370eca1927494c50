from typing import Any, Dict, List, Optional

from services.report_store_impl import ReportStoreImpl


class ReportStore:
    """
    Business facade over the report database: commands save their reports
    here without knowing about tables or sessions.
    """

    def __init__(self, store_impl: ReportStoreImpl):
        self.store_impl = store_impl

    @property
    def is_available(self) -> bool:
        return self.store_impl.is_connected

    def save_report(self, command: str, payload: Dict[str, Any], trace_id: str = "") -> Optional[str]:
        """Persists a report; returns its run id, or None when the store is offline."""
        return self.store_impl.insert(command, payload, trace_id)

    def get_report(self, run_id: str) -> Optional[Dict[str, Any]]:
        return self.store_impl.fetch(run_id)

    def list_reports(self, command: Optional[str] = None) -> List[Dict[str, Any]]:
        return self.store_impl.fetch_all(command)
