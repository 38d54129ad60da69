"""
Fusion, classification heads, temperature-scaled prediction and losses.

Every head runs a BiGRU (hidden 128, directions summed) followed by a
128 -> 2 linear layer and yields per-frame scores (σ_sil, σ_spk). The main head
consumes the element-wise sum of its modalities; auxiliary heads consume one
encoder's features directly and only exist while training.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from app.encoders import ModalityFeature
from app.model import HEAD_REGISTRY, ModelMode, WeightStore
from core.errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    EmptyInputError,
    ScheduleError,
)
from core.ops import linear
from core.recurrent import bigru_forward
from core.tensor import Tensor


PROB_CLAMP = 1e-7

# Weight of each head's loss in the total objective.
LOSS_WEIGHTS: Dict[ModelMode, Dict[str, float]] = {
    ModelMode.FABULIGHT: {"main": 1.0, "face": 0.25, "body": 0.25},
    ModelMode.LIGHTASD: {"main": 1.0, "face": 0.5},
}


@dataclass
class HeadOutput:
    """Scores laid out (N, T, 2) with columns (σ_sil, σ_spk)."""

    scores: Tensor
    modalities: Tuple[str, ...]

    def __post_init__(self):
        if self.scores.ndim != 3 or self.scores.shape[-1] != 2:
            raise DimensionError(f"Head scores must be (N, T, 2), got {self.scores.shape}")


@dataclass(frozen=True)
class TemperatureSchedule:
    base: float = 1.3
    slope: float = 0.02
    eval_value: float = 1.0
    max_epoch: int = 30

    def __call__(self, epoch: int, mode: str = "train") -> float:
        if mode == "eval":
            return self.eval_value
        if mode != "train":
            raise ConfigurationError(f"Temperature mode must be 'train' or 'eval', got '{mode}'")
        if not 1 <= epoch <= self.max_epoch:
            raise ScheduleError(f"Epoch {epoch} outside the schedule range 1..{self.max_epoch}")
        return self.base - self.slope * epoch


DEFAULT_SCHEDULE = TemperatureSchedule()


def temperature(epoch: int, mode: str = "train") -> float:
    return DEFAULT_SCHEDULE(epoch, mode)


def fuse(features: Sequence[ModalityFeature]) -> Tensor:
    if not features:
        raise EmptyInputError("Nothing to fuse")
    shape = features[0].values.shape
    fused = features[0].values
    for feature in features[1:]:
        if feature.values.shape != shape:
            raise DimensionError(
                f"Cannot fuse {feature.modality} feature {feature.values.shape} with {shape}"
            )
        fused = fused + feature.values
    return fused


def classify(fused: Tensor, store: WeightStore, head: str = "main", modalities=()) -> HeadOutput:
    """(N, 128, T) -> scores (N, T, 2)."""
    if fused.ndim != 3:
        raise DimensionError(f"Head input must be (N, 128, T), got {fused.shape}")
    if fused.shape[2] == 0:
        raise EmptyInputError("Head received a sequence with no frames")
    prefix = f"head.{head}"
    sequence = fused.transpose(0, 2, 1)
    hidden = bigru_forward(
        sequence, store.gru(f"{prefix}.gru.forward"), store.gru(f"{prefix}.gru.backward")
    )
    scores = linear(hidden, store[f"{prefix}.fc.weight"], store[f"{prefix}.fc.bias"])
    return HeadOutput(scores, tuple(modalities))


def predict(output: Union[HeadOutput, Tensor], tau: float) -> Tensor:
    """Speaking probability per frame, exp(σ_spk/τ) / (exp(σ_spk/τ) + exp(σ_sil/τ))."""
    if tau <= 0:
        raise ConfigurationError(f"Temperature must be positive, got {tau}")
    scores = output.scores if isinstance(output, HeadOutput) else output
    lead = (slice(None),) * (scores.ndim - 1)
    # the two-class softmax reduces to a logistic of the score difference
    return ((scores[lead + (1,)] - scores[lead + (0,)]) * (1.0 / tau)).sigmoid()


def head_loss(probs: Tensor, labels) -> Tensor:
    """Binary cross-entropy averaged over frames, then over clips.

    ``probs`` is (T,) for one clip or (N, T) for a batch.
    """
    labels = np.asarray(labels)
    if labels.shape != probs.shape:
        raise DimensionError(f"Labels {labels.shape} do not match probabilities {probs.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("Labels must be 0 or 1")
    if probs.size == 0:
        raise EmptyInputError("Loss over an empty sequence")
    g = labels.astype(probs.dtype)
    p = probs.clip(PROB_CLAMP, 1.0 - PROB_CLAMP)
    per_frame = -(p.log() * g + (1.0 - p).log() * (1.0 - g))
    return per_frame.mean()


def total_loss(mode: Union[ModelMode, str], losses: Mapping[str, Tensor]) -> Tensor:
    """Weighted sum of head losses: main + 0.25·face + 0.25·body, or main + 0.5·face."""
    mode = ModelMode(mode)
    weights = LOSS_WEIGHTS[mode]
    missing = [head for head in weights if head not in losses]
    if missing:
        raise ConfigurationError(f"{mode.value} mode needs losses for heads {missing}")
    total = None
    for head, weight in weights.items():
        term = losses[head] * weight
        total = term if total is None else total + term
    return total


def run_heads(
    features: Mapping[str, ModalityFeature],
    store: WeightStore,
    mode: Union[ModelMode, str],
    tau: float,
    heads: Sequence[str] = (),
) -> Dict[str, Tensor]:
    """Probabilities (N, T) of every head registered for ``mode`` (or the subset ``heads``)."""
    registry = HEAD_REGISTRY[ModelMode(mode)]
    selected = heads or tuple(registry)
    probabilities = {}
    for head in selected:
        if head not in registry:
            raise ConfigurationError(f"Head '{head}' is not part of {ModelMode(mode).value} mode")
        modalities = registry[head]
        fused = fuse([features[m] for m in modalities])
        probabilities[head] = predict(classify(fused, store, head, modalities), tau)
    return probabilities
