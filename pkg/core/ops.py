"""
Differentiable primitives used by the encoders and heads.

Layout convention: every activation carries a leading batch axis N followed by
the channel axis C, then the per-sample axes. The time axis is always last:

    face   (N, C, H, W, T)
    audio  (N, C, F, T)      F = MFCC axis
    body   (N, C, V, T)      V = joints
"""

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import ConfigurationError, DimensionError, StateError
from core.tensor import Tensor


IntOrTuple = Union[int, Sequence[int]]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _as_tuple(value: IntOrTuple, length: int) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * length
    value = tuple(int(v) for v in value)
    if len(value) != length:
        raise DimensionError(f"Expected {length} values, got {value}")
    return value


def convolve(x: Tensor, weight: Tensor, stride: IntOrTuple = 1, padding: IntOrTuple = 0) -> Tensor:
    """Cross-correlation over every axis after (N, C).

    ``weight`` has shape (C_out, C_in, *kernel) with one kernel extent per
    per-sample axis. Padding is zero padding on both sides of each axis.
    """
    n_axes = x.ndim - 2
    if weight.ndim != n_axes + 2:
        raise DimensionError(f"Kernel rank {weight.ndim - 2} does not match input rank {n_axes}")
    if weight.shape[1] != x.shape[1]:
        raise DimensionError(
            f"Weight expects {weight.shape[1]} input channels, input has {x.shape[1]}"
        )
    stride = _as_tuple(stride, n_axes)
    padding = _as_tuple(padding, n_axes)
    kernel = weight.shape[2:]

    out_sizes = tuple(
        (size + 2 * pad - k) // s + 1
        for size, pad, k, s in zip(x.shape[2:], padding, kernel, stride)
    )
    if any(size < 1 for size in out_sizes):
        raise DimensionError(
            f"Input {x.shape} too small for kernel {kernel} with padding {padding}"
        )

    pad_width = [(0, 0), (0, 0)] + [(p, p) for p in padding]
    padded = np.pad(x.data, pad_width)
    w = weight.data

    def window(offset):
        return (slice(None), slice(None)) + tuple(
            slice(o, o + s * (n - 1) + 1, s) for o, s, n in zip(offset, stride, out_sizes)
        )

    offsets = list(itertools.product(*(range(k) for k in kernel)))
    out = np.zeros((x.shape[0], w.shape[0]) + out_sizes, dtype=np.result_type(x.data, w))
    for offset in offsets:
        tap = w[(slice(None), slice(None)) + offset]
        out += np.moveaxis(np.tensordot(padded[window(offset)], tap, axes=([1], [1])), -1, 1)

    def backward(g):
        grad_padded = np.zeros_like(padded) if x.requires_grad else None
        grad_w = np.zeros_like(w) if weight.requires_grad else None
        sample_axes = [0] + list(range(2, g.ndim))
        for offset in offsets:
            sl = window(offset)
            if grad_w is not None:
                grad_w[(slice(None), slice(None)) + offset] = np.tensordot(
                    g, padded[sl], axes=(sample_axes, sample_axes)
                )
            if grad_padded is not None:
                tap = w[(slice(None), slice(None)) + offset]
                grad_padded[sl] += np.moveaxis(np.tensordot(g, tap, axes=([1], [0])), -1, 1)
        grad_x = None
        if grad_padded is not None:
            crop = (slice(None), slice(None)) + tuple(
                slice(p, p + size) for p, size in zip(padding, x.shape[2:])
            )
            grad_x = grad_padded[crop]
        return grad_x, grad_w

    return Tensor.result(out, (x, weight), backward, "convolve")


def conv_spatial(
    x: Tensor, weight: Tensor, stride: int = 1, padding: Optional[int] = None
) -> Tensor:
    """Convolution over the per-sample spatial axes, frame by frame.

    ``weight`` is (C_out, C_in, κ, κ) for face input (N, C, H, W, T) and
    (C_out, C_in, κ) for audio input (N, C, F, T). The time axis is untouched.
    """
    kernel = weight.shape[2:]
    if len(kernel) != x.ndim - 3:
        raise DimensionError(
            f"Spatial kernel {kernel} does not match the {x.ndim - 3} spatial axes of {x.shape}"
        )
    if padding is None:
        padding = (kernel[0] - 1) // 2
    full = weight.reshape(weight.shape + (1,))
    n_spatial = len(kernel)
    return convolve(
        x, full, stride=(stride,) * n_spatial + (1,), padding=(padding,) * n_spatial + (0,)
    )


def conv_temporal(x: Tensor, weight: Tensor, padding: Optional[int] = None) -> Tensor:
    """Convolution along the time axis with stride 1; other axes are untouched.

    ``weight`` is (C_out, C_in, κ_T) with κ_T odd, so the time extent is kept.
    """
    kernel = weight.shape[-1]
    if weight.ndim != 3:
        raise DimensionError(f"Temporal kernel must be (C_out, C_in, κ_T), got {weight.shape}")
    if kernel % 2 == 0:
        raise ConfigurationError(f"Temporal kernel size must be odd, got {kernel}")
    if padding is None:
        padding = (kernel - 1) // 2
    n_other = x.ndim - 3
    full = weight.reshape(weight.shape[:2] + (1,) * n_other + (kernel,))
    return convolve(x, full, stride=1, padding=(0,) * n_other + (padding,))


def conv_pointwise(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """1×…×1 convolution: a per-position channel mix. ``weight`` is (C_out, C_in)."""
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise DimensionError(f"Pointwise weight {weight.shape} does not fit input {x.shape}")
    full = weight.reshape(weight.shape + (1,) * (x.ndim - 2))
    out = convolve(x, full)
    if bias is not None:
        out = out + bias.reshape((1, -1) + (1,) * (x.ndim - 2))
    return out


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    return x + bias.reshape((1, -1) + (1,) * (x.ndim - 2))


class PoolKind(str, Enum):
    MAX_SPATIAL = "max_spatial"
    MAX_TEMPORAL = "max_temporal"
    GLOBAL_MAX_SPATIAL = "global_max_spatial"
    GLOBAL_AVG_SPATIAL = "global_avg_spatial"
    GLOBAL_AVG_JOINTS = "global_avg_joints"


def max_pool_axis(
    x: Tensor, axis: int, kernel: int = 3, stride: int = 2, padding: int = 1
) -> Tensor:
    """Max pooling along one axis with -inf padding."""
    length = x.shape[axis]
    if length + 2 * padding < kernel:
        raise DimensionError(
            f"Axis {axis} of length {length} is shorter than kernel {kernel} after padding"
        )
    out_len = (length + 2 * padding - kernel) // stride + 1
    pad_width = [(0, 0)] * x.ndim
    pad_width[axis] = (padding, padding)
    padded = np.pad(x.data, pad_width, constant_values=-np.inf)

    def tap(k):
        index = [slice(None)] * x.ndim
        index[axis] = slice(k, k + stride * (out_len - 1) + 1, stride)
        return tuple(index)

    candidates = np.stack([padded[tap(k)] for k in range(kernel)], axis=0)
    winner = np.argmax(candidates, axis=0)
    out = np.take_along_axis(candidates, winner[None], axis=0)[0]

    def backward(g):
        grad_padded = np.zeros_like(padded)
        for k in range(kernel):
            grad_padded[tap(k)] += g * (winner == k)
        index = [slice(None)] * x.ndim
        index[axis] = slice(padding, padding + length)
        return (grad_padded[tuple(index)],)

    return Tensor.result(out, (x,), backward, "max_pool")


def pool(
    x: Tensor, kind: Union[PoolKind, str], kernel: int = 3, stride: int = 2, padding: int = 1
) -> Tensor:
    """Pooling dispatcher.

    max_spatial        halves every per-sample axis except time
    max_temporal       halves the time axis
    global_max_spatial (N, C, *S, T) -> (N, C, T), maximum over S
    global_avg_spatial (N, C, *S, T) -> (N, C, T), mean over S
    global_avg_joints  (N, C, V, T)  -> (N, C, T), mean over joints
    """
    kind = PoolKind(kind)
    if x.ndim < 4:
        raise DimensionError(f"Pooling expects (N, C, ..., T) input, got {x.shape}")
    spatial_axes = tuple(range(2, x.ndim - 1))

    if kind is PoolKind.MAX_SPATIAL:
        out = x
        for axis in spatial_axes:
            out = max_pool_axis(out, axis, kernel, stride, padding)
        return out
    if kind is PoolKind.MAX_TEMPORAL:
        return max_pool_axis(x, x.ndim - 1, kernel, stride, padding)
    if kind is PoolKind.GLOBAL_MAX_SPATIAL:
        n, c, t = x.shape[0], x.shape[1], x.shape[-1]
        return x.reshape(n, c, -1, t).max(axis=2)
    if kind is PoolKind.GLOBAL_AVG_JOINTS and x.ndim != 4:
        raise DimensionError(f"global_avg_joints expects (N, C, V, T), got {x.shape}")
    return x.mean(axis=spatial_axes)


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics.

    ``gamma`` and ``beta`` are learnable tensors; the running statistics are
    plain arrays updated in training mode with the given momentum.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    training: bool = True

    @classmethod
    def fresh(cls, channels: int, dtype=None) -> "BatchNormState":
        gamma = Tensor.ones((channels,), requires_grad=True, dtype=dtype)
        beta = Tensor.zeros((channels,), requires_grad=True, dtype=dtype)
        return cls(
            gamma=gamma,
            beta=beta,
            running_mean=np.zeros(channels, dtype=gamma.dtype),
            running_var=np.ones(channels, dtype=gamma.dtype),
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def validate(self) -> None:
        for name in ("beta",):
            if getattr(self, name).shape != (self.channels,):
                raise DimensionError(f"BatchNorm {name} must have {self.channels} entries")
        for name in ("running_mean", "running_var"):
            stat = getattr(self, name)
            if stat is not None and stat.shape != (self.channels,):
                raise DimensionError(f"BatchNorm {name} must have {self.channels} entries")
        if self.running_var is not None and np.any(self.running_var <= 0):
            raise StateError("BatchNorm running variance must be strictly positive")


def batch_norm(x: Tensor, state: BatchNormState) -> Tensor:
    """Normalise per channel (axis 1) over the batch and all per-sample axes."""
    channels = x.shape[1]
    if channels != state.channels:
        raise DimensionError(f"BatchNorm has {state.channels} channels, input has {channels}")
    axes = (0,) + tuple(range(2, x.ndim))
    view = (1, channels) + (1,) * (x.ndim - 2)

    if state.training:
        mean = x.mean(axis=axes, keepdims=True)
        centred = x - mean
        var = (centred * centred).mean(axis=axes, keepdims=True)
        normalised = centred * (var + state.eps) ** -0.5

        count = x.size // channels
        batch_mean = mean.data.reshape(channels)
        unbiased = var.data.reshape(channels) * (count / max(count - 1, 1))
        m = state.momentum
        if state.running_mean is None or state.running_var is None:
            state.running_mean = batch_mean.copy()
            state.running_var = unbiased.copy()
        else:
            state.running_mean = (1 - m) * state.running_mean + m * batch_mean
            state.running_var = (1 - m) * state.running_var + m * unbiased
    else:
        if state.running_mean is None or state.running_var is None:
            raise StateError("BatchNorm in inference mode has no running statistics")
        mean = state.running_mean.reshape(view).astype(x.dtype)
        scale = ((state.running_var + state.eps) ** -0.5).reshape(view).astype(x.dtype)
        normalised = (x - mean) * scale

    return normalised * state.gamma.reshape(view) + state.beta.reshape(view)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map over the last axis: x @ Wᵀ + b, with W of shape (O, H)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    out = x @ weight.transpose(1, 0)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
        out = out + bias
    return out


def relu(x: Tensor) -> Tensor:
    return x.relu()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum with gradients.

    Every index of an operand must appear in the other operand or the output,
    which holds for all contractions used in this package.
    """
    inputs, output = subscripts.replace(" ", "").split("->")
    a_sub, b_sub = inputs.split(",")
    for operand, other in ((a_sub, b_sub), (b_sub, a_sub)):
        missing = set(operand) - set(other) - set(output)
        if missing:
            raise DimensionError(f"einsum index {sorted(missing)} is summed inside one operand")
    out = np.einsum(subscripts, a.data, b.data, optimize=True)

    def backward(g):
        grad_a = np.einsum(f"{output},{b_sub}->{a_sub}", g, b.data, optimize=True)
        grad_b = np.einsum(f"{a_sub},{output}->{b_sub}", a.data, g, optimize=True)
        return grad_a, grad_b

    return Tensor.result(out, (a, b), backward, "einsum")


def initial_uniform(
    rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype
) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


__all__ = [
    "BatchNormState",
    "PoolKind",
    "add_channel_bias",
    "batch_norm",
    "conv_pointwise",
    "conv_spatial",
    "conv_temporal",
    "convolve",
    "einsum",
    "initial_uniform",
    "linear",
    "max_pool_axis",
    "pool",
    "relu",
    "sigmoid",
    "tanh",
]

