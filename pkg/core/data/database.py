"""
Run Ledger
SQLAlchemy ORM models recording runs, critique rounds and metrics
"""

from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from loguru import logger
from sqlalchemy import JSON, Boolean, Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import DeclarativeBase, Session, relationship, sessionmaker


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


class Base(DeclarativeBase):
    """Base class for all models"""

    pass


class Run(Base):
    """One CLI invocation"""

    __tablename__ = "runs"

    id = Column(Integer, primary_key=True)
    command = Column(String(50), nullable=False)
    seed = Column(Integer, nullable=False, default=0)
    config_hash = Column(String(64), nullable=False)
    arguments = Column(JSON)
    status = Column(String(20), default="running")  # running, done, failed
    started_at = Column(DateTime, default=_utcnow)
    finished_at = Column(DateTime)

    # Relationships
    rounds = relationship("CritiqueRound", back_populates="run", cascade="all, delete-orphan")
    metrics = relationship("Metric", back_populates="run", cascade="all, delete-orphan")


class CritiqueRound(Base):
    """Critic verdict for one view in one self-reflection round"""

    __tablename__ = "critique_rounds"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)

    round = Column(Integer, nullable=False)
    view_id = Column(String(100), nullable=False)
    negative_count = Column(Integer, nullable=False, default=0)
    selected = Column(Boolean, default=False)  # round returned by the loop

    run = relationship("Run", back_populates="rounds")
    regions = relationship("CritiqueRegionRecord", back_populates="critique_round", cascade="all, delete-orphan")


class CritiqueRegionRecord(Base):
    """A labelled box with the critic's note (audit trail)"""

    __tablename__ = "critique_regions"

    id = Column(Integer, primary_key=True)
    round_id = Column(Integer, ForeignKey("critique_rounds.id"), nullable=False)

    x0 = Column(Integer, nullable=False)
    y0 = Column(Integer, nullable=False)
    x1 = Column(Integer, nullable=False)
    y1 = Column(Integer, nullable=False)
    label = Column(String(50), nullable=False)
    note = Column(Text)

    critique_round = relationship("CritiqueRound", back_populates="regions")


class Metric(Base):
    """Scalar result of a run, optionally per view"""

    __tablename__ = "metrics"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)

    name = Column(String(100), nullable=False)
    value = Column(Float)
    view_id = Column(String(100))

    run = relationship("Run", back_populates="metrics")


# Database initialization
_engine: Engine | None = None
_SessionLocal = None


def get_engine(database_url: str | None = None) -> Engine:
    """Get or create database engine"""
    global _engine, _SessionLocal
    if _engine is None or database_url is not None:
        if database_url is None:
            from config.config import get_settings

            database_url = get_settings().storage.database_url

        # Ensure db directory exists
        if database_url.startswith("sqlite:///") and database_url != "sqlite:///:memory:":
            Path(database_url.replace("sqlite:///", "")).parent.mkdir(parents=True, exist_ok=True)

        _engine = create_engine(database_url, echo=False, pool_pre_ping=True)
        _SessionLocal = None
    return _engine


def get_session() -> Session:
    """Get database session"""
    global _SessionLocal
    if _SessionLocal is None:
        _SessionLocal = sessionmaker(bind=get_engine())
    return _SessionLocal()


def init_database(database_url: str | None = None) -> Engine:
    """Initialize database schema"""
    engine = get_engine(database_url)
    logger.info("ledger_init creating tables")
    Base.metadata.create_all(engine)
    logger.success(f"ledger_ready url={engine.url.render_as_string(hide_password=True)}")
    return engine


class RunLedger:
    """Write-through recorder for one run"""

    def __init__(self, session: Session, command: str, seed: int, config_hash: str, arguments: dict | None = None):
        self.session = session
        self.run = Run(command=command, seed=seed, config_hash=config_hash, arguments=arguments or {})
        session.add(self.run)
        session.commit()
        logger.debug(f"ledger_run_started id={self.run.id} command={command}")

    def record_rounds(self, rounds, selected_round: int) -> None:
        """Store every report of a reflect loop (RoundRecord list)"""
        for record in rounds:
            for report in record.reports:
                row = CritiqueRound(
                    round=record.round,
                    view_id=report.view_id,
                    negative_count=len(report.negatives),
                    selected=record.round == selected_round,
                )
                for region in report.regions:
                    x0, y0, x1, y1 = region.box
                    row.regions.append(
                        CritiqueRegionRecord(x0=x0, y0=y0, x1=x1, y1=y1, label=region.label.value, note=region.note)
                    )
                self.run.rounds.append(row)
        self.session.commit()

    def record_metrics(self, values: dict[str, Any], view_id: str | None = None) -> None:
        for name, value in values.items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                self.run.metrics.append(Metric(name=name, value=float(value), view_id=view_id))
        self.session.commit()

    def finish(self, status: str = "done") -> None:
        self.run.status = status
        self.run.finished_at = _utcnow()
        self.session.commit()
        logger.debug(f"ledger_run_finished id={self.run.id} status={status}")

    def close(self) -> None:
        self.session.close()
