"""
Face, audio and body-pose feature encoders.

Every encoder maps its modality to a (N, 128, T) feature so the three streams
can be summed frame by frame.

    face   (N, 1, S, S, T)    three two-path blocks, spatial max pools, global max
    audio  (N, 1, 13, 4T)     three two-path blocks, temporal max pools, global mean
    body   (N, 3, N_b, T)     input BN, three two-path graph blocks, joint mean

Each block runs a kernel-3 and a kernel-5 path side by side and merges their
sum with a pointwise convolution.
"""

from dataclasses import dataclass

from app.model import FEATURE_DIM, N_MFCC, PATH_KERNELS, PATH_RADIUS, WeightStore
from core.errors import AlignmentError, ConfigurationError, DimensionError, EmptyInputError
from core.ops import (
    PoolKind,
    add_channel_bias,
    batch_norm,
    conv_pointwise,
    conv_spatial,
    conv_temporal,
    einsum,
    pool,
    relu,
)
from core.tensor import Tensor


MODALITIES = ("face", "audio", "body")


@dataclass
class ModalityFeature:
    values: Tensor
    modality: str

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigurationError(f"Unknown modality '{self.modality}'")
        if self.values.ndim != 3 or self.values.shape[1] != FEATURE_DIM:
            raise DimensionError(
                f"{self.modality} feature must be (N, {FEATURE_DIM}, T), got {self.values.shape}"
            )

    @property
    def frames(self) -> int:
        return self.values.shape[2]


def _visual_block(x: Tensor, store: WeightStore, prefix: str, stride: int) -> Tensor:
    paths = []
    for k in PATH_KERNELS:
        path = f"{prefix}.path{k}"
        y = conv_spatial(x, store[f"{path}.spatial.weight"], stride=stride, padding=(k - 1) // 2)
        y = relu(batch_norm(y, store.bn[f"{path}.spatial_bn"]))
        y = conv_temporal(y, store[f"{path}.temporal.weight"])
        y = relu(batch_norm(y, store.bn[f"{path}.temporal_bn"]))
        paths.append(y)
    if paths[0].shape != paths[1].shape:
        raise DimensionError(
            f"{prefix}: path outputs disagree {paths[0].shape} vs {paths[1].shape}"
        )
    merged = conv_pointwise(paths[0] + paths[1], store[f"{prefix}.merge.weight"])
    return relu(batch_norm(merged, store.bn[f"{prefix}.merge_bn"]))


def face_block(x: Tensor, store: WeightStore, prefix: str, first_block: bool) -> Tensor:
    """(N, C_in, H, W, T) -> (N, C_out, H', W', T); the first block halves H and W."""
    return _visual_block(x, store, prefix, stride=2 if first_block else 1)


def audio_block(x: Tensor, store: WeightStore, prefix: str) -> Tensor:
    """(N, C_in, 13, T_a) -> (N, C_out, 13, T_a)."""
    return _visual_block(x, store, prefix, stride=1)


def face_encode(faces: Tensor, store: WeightStore) -> ModalityFeature:
    if faces.ndim != 5 or faces.shape[1] != 1:
        raise DimensionError(f"Face input must be (N, 1, S, S, T), got {faces.shape}")
    if faces.shape[-1] == 0:
        raise EmptyInputError("Face input has no frames")
    size = store.spec.face_size
    if faces.shape[2:4] != (size, size):
        raise DimensionError(f"Face crops must be {size}x{size}, got {faces.shape[2:4]}")

    x = face_block(faces, store, "face.block1", first_block=True)
    x = pool(x, PoolKind.MAX_SPATIAL)
    x = face_block(x, store, "face.block2", first_block=False)
    x = pool(x, PoolKind.MAX_SPATIAL)
    x = face_block(x, store, "face.block3", first_block=False)
    return ModalityFeature(pool(x, PoolKind.GLOBAL_MAX_SPATIAL), "face")


def audio_encode(mfcc: Tensor, store: WeightStore) -> ModalityFeature:
    if mfcc.ndim != 4 or mfcc.shape[1] != 1 or mfcc.shape[2] != N_MFCC:
        raise DimensionError(f"Audio input must be (N, 1, {N_MFCC}, 4T), got {mfcc.shape}")
    steps = mfcc.shape[-1]
    if steps == 0:
        raise EmptyInputError("Audio input has no MFCC vectors")
    if steps % 4:
        raise AlignmentError(
            f"Audio input has {steps} MFCC vectors, not a multiple of four; align it first"
        )

    x = audio_block(mfcc, store, "audio.block1")
    x = pool(x, PoolKind.MAX_TEMPORAL)
    x = audio_block(x, store, "audio.block2")
    x = pool(x, PoolKind.MAX_TEMPORAL)
    x = audio_block(x, store, "audio.block3")
    return ModalityFeature(pool(x, PoolKind.GLOBAL_AVG_SPATIAL), "audio")


def graph_conv(x: Tensor, weight: Tensor, bias: Tensor, B: Tensor) -> Tensor:
    """Partitioned graph convolution over joints.

    A pointwise convolution produces κ·C_out channels that are read r-major as
    (κ, C_out); each partition block is then contracted with its matrix:
    Z[n, c, j, t] = Σ_r Σ_i M[n, r, c, i, t] · B[r, i, j].
    """
    kernel = B.shape[0]
    if weight.shape[0] % kernel:
        raise ConfigurationError(
            f"Graph conv produces {weight.shape[0]} channels, not a multiple of {kernel} partitions"
        )
    n, _, joints, t = x.shape
    if B.shape[1:] != (joints, joints):
        raise DimensionError(f"Partition matrices {B.shape[1:]} do not fit {joints} joints")
    c_out = weight.shape[0] // kernel
    m = conv_pointwise(x, weight, bias).reshape(n, kernel, c_out, joints, t)
    return einsum("nrcit,rij->ncjt", m, B)


def body_path(x: Tensor, store: WeightStore, prefix: str, k: int) -> Tensor:
    """One graph-conv path of a body block; reads only its own parameters."""
    path = f"{prefix}.path{k}"
    B = store[f"{path}.gcn.B"]
    if B.shape[0] != 2 * PATH_RADIUS[k] + 1:
        raise ConfigurationError(f"{path}: {B.shape[0]} partition matrices do not match kernel {k}")
    y = graph_conv(x, store[f"{path}.gcn.weight"], store[f"{path}.gcn.bias"], B)
    y = relu(batch_norm(y, store.bn[f"{path}.gcn_bn"]))
    y = conv_temporal(y, store[f"{path}.temporal.weight"])
    y = add_channel_bias(y, store[f"{path}.temporal.bias"])
    return batch_norm(y, store.bn[f"{path}.temporal_bn"])


def body_block(x: Tensor, store: WeightStore, prefix: str) -> Tensor:
    """(N, C_in, N_b, T) -> (N, C_out, N_b, T)."""
    paths = [body_path(x, store, prefix, k) for k in PATH_KERNELS]
    merged = conv_pointwise(
        paths[0] + paths[1], store[f"{prefix}.merge.weight"], store[f"{prefix}.merge.bias"]
    )
    return relu(batch_norm(merged, store.bn[f"{prefix}.merge_bn"]))


def body_encode(poses: Tensor, store: WeightStore) -> ModalityFeature:
    if poses.ndim != 4 or poses.shape[1] != 3:
        raise DimensionError(f"Pose input must be (N, 3, N_b, T), got {poses.shape}")
    n, channels, joints, t = poses.shape
    if joints != store.spec.n_joints:
        raise DimensionError(
            f"Pose input has {joints} joints, the {store.spec.body_variant.value} "
            f"skeleton has {store.spec.n_joints}"
        )
    if t == 0:
        raise EmptyInputError("Pose input has no frames")

    # input normalisation runs over the C·N_b channels, c-major
    x = batch_norm(poses.reshape(n, channels * joints, t), store.bn["body.input_bn"])
    x = x.reshape(n, channels, joints, t)
    for b in (1, 2, 3):
        x = body_block(x, store, f"body.block{b}")
    return ModalityFeature(pool(x, PoolKind.GLOBAL_AVG_JOINTS), "body")
