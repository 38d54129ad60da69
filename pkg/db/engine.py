from pathlib import Path
from typing import Tuple, Union

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker


def create_session_factory(database_file: Union[str, Path]) -> Tuple[Engine, sessionmaker]:
    """Engine and session factory for one SQLite run-history file."""
    engine = create_engine(f"sqlite:///{database_file}", echo=False)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return engine, SessionLocal


__all__ = ["create_session_factory"]
