"""
Database service layer for training run history.

Repository over RunRecord / EpochRecord bound to one session factory (one
``runs.db`` per output directory). Methods return plain dictionaries so
callers never hold objects whose session has closed.
"""

import functools
import json
import logging
from datetime import datetime
from typing import Any, Dict, List, Mapping, Optional

from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import Session, sessionmaker

from db.models.training_run import EpochRecord, RunRecord

logger = logging.getLogger(__name__)


def with_session(func):
    """Decorator for automatic session management.

    A caller-supplied ``session`` is used as is and left open; otherwise a new
    session is opened from the repository's factory and committed when the
    call succeeds.
    """

    @functools.wraps(func)
    def wrapper(self, *args, **kwargs):
        session = kwargs.pop("session", None)
        if session is not None:
            return func(self, *args, session=session, **kwargs)

        with self.SessionLocal() as session:
            try:
                result = func(self, *args, session=session, **kwargs)
                session.commit()
                return result
            except SQLAlchemyError:
                session.rollback()
                raise

    return wrapper


class TrainingRun:
    """Repository for training runs and their per-epoch metrics."""

    def __init__(self, session_factory: sessionmaker):
        self.SessionLocal = session_factory

    @with_session
    def start_run(
        self,
        run_id: str,
        mode: str,
        body_variant: str,
        seed: int,
        config_json: Optional[str] = None,
        session: Session = None,
    ) -> Dict[str, Any]:
        existing = session.query(RunRecord).filter_by(id=run_id).first()
        if existing:
            # a restarted run replaces its previous epochs
            session.delete(existing)
            session.flush()
        record = RunRecord(
            id=run_id,
            mode=mode,
            body_variant=body_variant,
            seed=seed,
            config_json=config_json,
            status="running",
        )
        session.add(record)
        session.flush()
        logger.debug(f"Started run {run_id}")
        return record.to_dict()

    @with_session
    def record_epoch(
        self,
        run_id: str,
        epoch: int,
        losses: Mapping[str, float],
        lr: float,
        tau: float,
        val_map: Optional[float] = None,
        checkpoint_path: Optional[str] = None,
        session: Session = None,
    ) -> Dict[str, Any]:
        if not session.query(RunRecord).filter_by(id=run_id).first():
            raise KeyError(f"Unknown run '{run_id}'")
        record = EpochRecord(
            run_id=run_id,
            epoch=epoch,
            losses_json=json.dumps(dict(losses), sort_keys=True),
            lr=lr,
            tau=tau,
            val_map=val_map,
            checkpoint_path=checkpoint_path,
        )
        session.add(record)
        session.flush()
        return record.to_dict()

    @with_session
    def get_epochs(self, run_id: str, session: Session = None) -> List[Dict[str, Any]]:
        try:
            records = (
                session.query(EpochRecord)
                .filter_by(run_id=run_id)
                .order_by(EpochRecord.epoch)
                .all()
            )
            return [record.to_dict() for record in records]
        except SQLAlchemyError as e:
            logger.error(f"Error getting epochs of run {run_id}: {e}")
            return []

    @with_session
    def get_run(self, run_id: str, session: Session = None) -> Optional[Dict[str, Any]]:
        record = session.query(RunRecord).filter_by(id=run_id).first()
        return record.to_dict() if record else None

    @with_session
    def get_all_runs(self, session: Session = None) -> List[Dict[str, Any]]:
        return [r.to_dict() for r in session.query(RunRecord).order_by(RunRecord.started_at)]

    @with_session
    def finish_run(
        self,
        run_id: str,
        status: str = "completed",
        best_epoch: Optional[int] = None,
        error_message: Optional[str] = None,
        session: Session = None,
    ) -> bool:
        record = session.query(RunRecord).filter_by(id=run_id).first()
        if not record:
            return False
        record.status = status
        record.best_epoch = best_epoch
        record.error_message = error_message
        record.finished_at = datetime.utcnow()
        logger.debug(f"Run {run_id} finished: {status}")
        return True
