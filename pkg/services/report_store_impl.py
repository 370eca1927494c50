import json
import logging
import uuid
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from sqlalchemy import DateTime, String, Text, select
from sqlalchemy.engine import Engine, create_engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column
from sqlalchemy.pool import StaticPool

logger = logging.getLogger("ReportStore")


# ----------------------------------------------------------------------
# 0. MODEL DEFINITION (SQLAlchemy Schema)
# ----------------------------------------------------------------------

class Base(DeclarativeBase):
    """Base class for database tables (SQLAlchemy ORM base)."""
    pass


class RunReport(Base):
    """One persisted command report (run, eval, bench or explain)."""
    __tablename__ = "run_reports"

    run_id: Mapped[str] = mapped_column(String(36), primary_key=True)
    trace_id: Mapped[str] = mapped_column(String(36), default="")
    command: Mapped[str] = mapped_column(String(20))
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True))
    # Report body as JSON text
    payload: Mapped[str] = mapped_column(Text)


def _row_to_dict(row: Optional[RunReport]) -> Optional[Dict[str, Any]]:
    if row is None:
        return None
    return {
        "run_id": row.run_id,
        "trace_id": row.trace_id,
        "command": row.command,
        "created_at": row.created_at.isoformat(),
        "payload": json.loads(row.payload),
    }


# ----------------------------------------------------------------------
# 1. STORE IMPLEMENTATION (Connection and schema)
# ----------------------------------------------------------------------

class ReportStoreImpl:
    """
    Owns the engine, the schema creation and the SQL of the report store.
    A failed connection leaves the store offline instead of aborting the run.
    """

    def __init__(self, database_url: str):
        self.database_url = database_url
        self.engine: Optional[Engine] = None
        self.is_connected: bool = False

        try:
            if database_url.startswith("sqlite") and ":memory:" in database_url:
                # One shared connection, otherwise every session sees an empty database.
                self.engine = create_engine(
                    database_url, connect_args={"check_same_thread": False}, poolclass=StaticPool
                )
            else:
                self.engine = create_engine(database_url)
            Base.metadata.create_all(self.engine)
            self.is_connected = True
            logger.debug("Report store ready at %s", database_url)
        except SQLAlchemyError as e:
            logger.error("Could not open the report store at %s: %s", database_url, e)

    def insert(self, command: str, payload: Dict[str, Any], trace_id: str = "") -> Optional[str]:
        if not self.is_connected or self.engine is None:
            return None
        run_id = str(uuid.uuid4())
        try:
            with Session(self.engine) as session:
                session.add(RunReport(
                    run_id=run_id,
                    trace_id=trace_id or "",
                    command=command,
                    created_at=datetime.now(timezone.utc),
                    payload=json.dumps(payload),
                ))
                session.commit()
        except SQLAlchemyError as e:
            logger.error("Failed to persist %s report: %s", command, e)
            return None
        return run_id

    def fetch(self, run_id: str) -> Optional[Dict[str, Any]]:
        if not self.is_connected or self.engine is None:
            return None
        with Session(self.engine) as session:
            return _row_to_dict(session.get(RunReport, run_id))

    def fetch_all(self, command: Optional[str] = None) -> List[Dict[str, Any]]:
        if not self.is_connected or self.engine is None:
            return []
        query = select(RunReport).order_by(RunReport.created_at)
        if command:
            query = query.where(RunReport.command == command)
        with Session(self.engine) as session:
            return [_row_to_dict(row) for row in session.scalars(query)]
