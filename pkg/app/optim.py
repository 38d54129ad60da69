"""
ADAM optimiser over named tensors.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from core.errors import ContractError
from core.tensor import Tensor


NamedParams = Union[Mapping[str, Tensor], Iterable[Tuple[str, Tensor]]]


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)

    def moments(self, name: str, like: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if name not in self.first:
            self.first[name] = np.zeros_like(like)
            self.second[name] = np.zeros_like(like)
        return self.first[name], self.second[name]


def _items(params: NamedParams):
    return list(params.items()) if isinstance(params, Mapping) else list(params)


def adam_step(params: NamedParams, state: AdamState, lr: float) -> None:
    """One bias-corrected ADAM update in place; gradients are cleared afterwards.

    Raises:
        ContractError: a parameter has no gradient (backward did not reach it)
    """
    items = _items(params)
    missing = [name for name, tensor in items if tensor.grad is None]
    if missing:
        raise ContractError(f"No gradient for {len(missing)} parameter(s), e.g. {missing[:3]}")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for name, tensor in items:
        grad = tensor.grad
        m, v = state.moments(name, tensor.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(tensor.dtype)
        tensor.zero_grad()
