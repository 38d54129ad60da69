"""
Numeric core: dense tensors, differentiable primitives and gradient checking.
"""

from .errors import FabuLightError
from .tensor import Tensor, get_default_dtype, no_grad, set_default_dtype

__all__ = ["FabuLightError", "Tensor", "get_default_dtype", "no_grad", "set_default_dtype"]
