"""Shuffle-aware music session recommender."""

from .corpus import Session, TrainingInstance, Vocabulary
from .trainer import MuseRecommender, TrainConfig, load_checkpoint, save_checkpoint

__all__ = [
    "Session",
    "TrainingInstance",
    "Vocabulary",
    "MuseRecommender",
    "TrainConfig",
    "load_checkpoint",
    "save_checkpoint",
]

__version__ = "0.1.0"
