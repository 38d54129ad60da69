"""
Database models for training run history.

One RunRecord per ``train`` invocation and one EpochRecord per finished epoch.
Head losses are stored as a JSON object keyed by head name so Light-ASD and
FabuLight runs share the schema.
"""

import json
from datetime import datetime
from typing import Any, Dict

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import relationship

from db.models.base import Base


class RunRecord(Base):
    """Database model for training runs."""

    __tablename__ = "training_runs"

    id = Column(String, primary_key=True)
    mode = Column(String, nullable=False)  # fabulight | lightasd
    body_variant = Column(String, nullable=False)  # whole | upper
    seed = Column(Integer, nullable=False)
    config_json = Column(Text)
    status = Column(String, default="running")  # running | completed | failed
    best_epoch = Column(Integer)
    error_message = Column(Text)
    started_at = Column(DateTime, default=datetime.utcnow)
    finished_at = Column(DateTime)

    epochs = relationship(
        "EpochRecord",
        back_populates="run",
        order_by="EpochRecord.epoch",
        cascade="all, delete-orphan",
    )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "mode": self.mode,
            "body_variant": self.body_variant,
            "seed": self.seed,
            "config": json.loads(self.config_json) if self.config_json else None,
            "status": self.status,
            "best_epoch": self.best_epoch,
            "error_message": self.error_message,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "finished_at": self.finished_at.isoformat() if self.finished_at else None,
        }


class EpochRecord(Base):
    """Database model for per-epoch training metrics."""

    __tablename__ = "epoch_metrics"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String, ForeignKey("training_runs.id"), nullable=False)
    epoch = Column(Integer, nullable=False)
    losses_json = Column(Text, nullable=False)
    lr = Column(Float, nullable=False)
    tau = Column(Float, nullable=False)
    val_map = Column(Float)  # None without a validation manifest
    checkpoint_path = Column(String)
    created_at = Column(DateTime, default=datetime.utcnow)

    run = relationship("RunRecord", back_populates="epochs")

    @property
    def losses(self) -> Dict[str, float]:
        return json.loads(self.losses_json)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "epoch": self.epoch,
            "losses": self.losses,
            "lr": self.lr,
            "tau": self.tau,
            "val_map": self.val_map,
            "checkpoint_path": self.checkpoint_path,
        }
