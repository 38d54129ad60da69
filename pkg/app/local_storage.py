"""
Local database storage for training run history using SQLAlchemy
"""

import logging
from pathlib import Path
from typing import Union

from sqlalchemy.exc import SQLAlchemyError

from db.engine import create_session_factory
from db.models.base import Base
from db.training_run import TrainingRun


class RunStorage:
    """Local run-history database (``<out_dir>/runs.db``)."""

    def __init__(self, database_file: Union[str, Path]):
        self.logger = logging.getLogger(__name__)
        self.database_file = Path(database_file)
        self.logger.debug(f"Using database: sqlite:///{self.database_file}")
        self.engine, self.SessionLocal = create_session_factory(self.database_file)
        self.runs = TrainingRun(self.SessionLocal)

    def ensure_database_directory(self):
        self.database_file.parent.mkdir(parents=True, exist_ok=True)

    def migrate_database(self) -> bool:
        """Create tables (will be no-op if they already exist)."""
        self.ensure_database_directory()
        try:
            Base.metadata.create_all(self.engine)
        except SQLAlchemyError as e:
            self.logger.error(f"Error creating tables: {e}")
            return False
        return True

    def close(self):
        self.engine.dispose()
