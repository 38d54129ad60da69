"""
The assembled active-speaker model: encoders, fusion and heads over one WeightStore.
"""

from typing import Dict, List, Optional, Sequence, Tuple, Union

from app.batching import ClipBatch
from app.encoders import ModalityFeature, audio_encode, body_encode, face_encode
from app.heads import head_loss, run_heads, total_loss
from app.model import HEAD_REGISTRY, ModelMode, WeightStore
from core.errors import ConfigurationError
from core.tensor import Tensor, as_tensor, no_grad


class ActiveSpeakerModel:
    """
    Forward passes and losses for one mode.

    A Light-ASD mode model may run over a FabuLight store (the body stream and
    body head are then simply unused); the reverse is rejected.
    """

    def __init__(self, store: WeightStore, mode: Optional[Union[ModelMode, str]] = None):
        self.store = store
        self.mode = ModelMode(mode) if mode is not None else store.spec.mode
        if self.mode is ModelMode.FABULIGHT and not store.spec.uses_body:
            raise ConfigurationError(
                "A lightasd weight store has no body stream for fabulight mode"
            )

    @property
    def heads(self) -> Tuple[str, ...]:
        return tuple(HEAD_REGISTRY[self.mode])

    @property
    def modalities(self) -> Tuple[str, ...]:
        return ("face", "audio", "body") if self.mode is ModelMode.FABULIGHT else ("face", "audio")

    def parameter_prefixes(self) -> Tuple[str, ...]:
        return tuple(f"{m}." for m in self.modalities) + tuple(f"head.{h}." for h in self.heads)

    def parameters(self) -> List[Tuple[str, Tensor]]:
        """Parameters that take part in this mode's training objective."""
        return list(self.store.named_parameters(prefixes=self.parameter_prefixes()))

    def encode(self, batch: ClipBatch) -> Dict[str, ModalityFeature]:
        dtype = self.store.dtype
        features = {
            "face": face_encode(as_tensor(batch.faces, dtype), self.store),
            "audio": audio_encode(as_tensor(batch.mfcc, dtype), self.store),
        }
        if "body" in self.modalities:
            features["body"] = body_encode(as_tensor(batch.poses, dtype), self.store)
        return features

    def loss(self, batch: ClipBatch, tau: float) -> Tuple[Tensor, Dict[str, Tensor]]:
        """Total objective and the per-head losses for one batch."""
        probabilities = run_heads(self.encode(batch), self.store, self.mode, tau)
        losses = {head: head_loss(p, batch.labels) for head, p in probabilities.items()}
        return total_loss(self.mode, losses), losses

    def probabilities(
        self, batch: ClipBatch, tau: float = 1.0, heads: Sequence[str] = ("main",)
    ) -> Dict[str, Tensor]:
        """Inference-mode probabilities (N, T); batch norm uses running statistics."""
        was_training = any(state.training for state in self.store.bn.values())
        self.store.set_training(False)
        try:
            with no_grad():
                return run_heads(self.encode(batch), self.store, self.mode, tau, heads)
        finally:
            self.store.set_training(was_training)
