"""
Gated recurrent units.

Gate layout follows the common (reset, update, candidate) row blocks:

    w_ih (3H, D), w_hh (3H, H), b_ih (3H,), b_hh (3H,)

    r  = σ(W_ir x + b_ir + W_hr h + b_hr)
    z  = σ(W_iz x + b_iz + W_hz h + b_hz)
    h~ = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
    h' = (1 − z) ⊙ h + z ⊙ h~
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np

from core.errors import DimensionError, EmptyInputError
from core.ops import linear
from core.tensor import Tensor, stack


@dataclass
class GRUParams:
    w_ih: Tensor
    w_hh: Tensor
    b_ih: Tensor
    b_hh: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]

    def validate(self) -> None:
        h = self.hidden_size
        expected = {
            "w_ih": (3 * h, self.input_size),
            "w_hh": (3 * h, h),
            "b_ih": (3 * h,),
            "b_hh": (3 * h,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise DimensionError(f"GRU {name} has shape {actual}, expected {shape}")

    def named(self) -> Dict[str, Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "b_ih": self.b_ih, "b_hh": self.b_hh}


def gru_direction(x: Tensor, params: GRUParams, reverse: bool = False) -> Tensor:
    """Run one direction over x of shape (N, T, D); returns (N, T, H) in input time order."""
    params.validate()
    n, steps, features = x.shape
    if steps == 0:
        raise EmptyInputError("GRU received a sequence with no frames")
    if features != params.input_size:
        raise DimensionError(f"GRU expects {params.input_size} features, got {features}")
    h_size = params.hidden_size

    # input projections for every step at once
    projected = linear(x, params.w_ih, params.b_ih)
    h = Tensor(np.zeros((n, h_size), dtype=x.dtype))
    outputs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        gi = projected[:, t, :]
        gh = linear(h, params.w_hh, params.b_hh)
        r = (gi[:, :h_size] + gh[:, :h_size]).sigmoid()
        z = (gi[:, h_size : 2 * h_size] + gh[:, h_size : 2 * h_size]).sigmoid()
        candidate = (gi[:, 2 * h_size :] + r * gh[:, 2 * h_size :]).tanh()
        h = (1.0 - z) * h + z * candidate
        outputs[t] = h
    return stack(outputs, axis=1)


def bigru_forward(x: Tensor, forward: GRUParams, backward: GRUParams) -> Tensor:
    """Bidirectional GRU whose two directional outputs are summed: (N, T, D) -> (N, T, H)."""
    if x.ndim != 3:
        raise DimensionError(f"BiGRU expects (N, T, D) input, got {x.shape}")
    if x.shape[1] == 0:
        raise EmptyInputError("BiGRU received a sequence with no frames")
    if forward.hidden_size != backward.hidden_size:
        raise DimensionError(
            f"BiGRU directions disagree on hidden size: "
            f"{forward.hidden_size} vs {backward.hidden_size}"
        )
    return gru_direction(x, forward) + gru_direction(x, backward, reverse=True)
