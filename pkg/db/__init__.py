from .training_run import TrainingRun

__all__ = ["TrainingRun"]
