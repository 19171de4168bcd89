"""Run registry: one row per CLI invocation, stored in SQLite"""

from datetime import datetime, timezone
from pathlib import Path

from sqlalchemy import Column, DateTime, Index, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from snrflow.data.models import RunRecord

Base = declarative_base()


class RunRecordRow(Base):
    """Run registry table"""

    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    config_fingerprint = Column(String, nullable=False)
    run_dir = Column(String, nullable=False)
    status = Column(String, nullable=False)
    exit_code = Column(Integer, nullable=True)
    started_at = Column(DateTime, nullable=False)
    finished_at = Column(DateTime, nullable=True)

    __table_args__ = (
        Index("idx_runs_started", "started_at"),
        {"sqlite_autoincrement": True},
    )


def _to_record(row: RunRecordRow) -> RunRecord:
    return RunRecord(
        id=row.id,
        command=row.command,
        seed=row.seed,
        config_fingerprint=row.config_fingerprint,
        run_dir=row.run_dir,
        status=row.status,
        exit_code=row.exit_code,
        started_at=row.started_at,
        finished_at=row.finished_at,
    )


class Database:
    """Database manager for the run registry"""

    def __init__(self, db_path: Path | str | None = None):
        if db_path is None:
            db_path = Path.home() / ".snrflow" / "runs.db"
        else:
            db_path = Path(db_path)

        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.db_path = db_path
        self.engine = create_engine(f"sqlite:///{db_path}", echo=False)
        self.Session = sessionmaker(bind=self.engine)
        self._init_db()

    def _init_db(self) -> None:
        """Initialize database schema"""
        Base.metadata.create_all(self.engine)

    def record_run_start(self, record: RunRecord) -> int:
        """Store a started run and return its id"""
        session = self.Session()
        try:
            row = RunRecordRow(
                command=record.command,
                seed=record.seed,
                config_fingerprint=record.config_fingerprint,
                run_dir=record.run_dir,
                status=record.status,
                exit_code=record.exit_code,
                started_at=record.started_at,
                finished_at=record.finished_at,
            )
            session.add(row)
            session.commit()
            return int(row.id)
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def record_run_end(self, run_id: int, status: str, exit_code: int) -> None:
        """Mark a run finished with its final status and exit code"""
        session = self.Session()
        try:
            row = session.get(RunRecordRow, run_id)
            if row is None:
                return
            row.status = status
            row.exit_code = exit_code
            row.finished_at = datetime.now(timezone.utc)
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def get_run(self, run_id: int) -> RunRecord | None:
        session = self.Session()
        try:
            row = session.get(RunRecordRow, run_id)
            return _to_record(row) if row else None
        finally:
            session.close()

    def list_runs(self, limit: int = 50, command: str | None = None) -> list[RunRecord]:
        """Most recent runs first"""
        session = self.Session()
        try:
            query = session.query(RunRecordRow)
            if command:
                query = query.filter_by(command=command)
            rows = query.order_by(RunRecordRow.started_at.desc(), RunRecordRow.id.desc()).limit(limit).all()
            return [_to_record(row) for row in rows]
        finally:
            session.close()
