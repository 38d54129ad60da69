"""
Model, training and analysis modules of FabuLight-ASD
"""

from app.model import ArchitectureSpec, ModelMode, WeightStore, initialize_weights
from app.network import ActiveSpeakerModel
from app.trainer import TrainConfig, Trainer, train

__all__ = [
    "ActiveSpeakerModel",
    "ArchitectureSpec",
    "ModelMode",
    "TrainConfig",
    "Trainer",
    "WeightStore",
    "initialize_weights",
    "train",
]
