from .training_run import EpochRecord, RunRecord

__all__ = ["EpochRecord", "RunRecord"]
