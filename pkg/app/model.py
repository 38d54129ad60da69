"""
Model architecture, parameter store and initialisation.

Architecture:
    - ArchitectureSpec: immutable description of one configuration (mode,
      body variant, face crop size) and the single source of parameter names
    - WeightStore: named learnable tensors plus batch-norm states
    - initialize_weights: seeded construction of a fresh store

Parameter naming follows ``<stream>.block<b>.path<k>.<layer>.<array>``:

    face.block1.path3.spatial.weight         (C_out, C_in, 3, 3)
    audio.block2.path5.temporal.weight       (C_out, C_out, 5)
    body.block3.path5.gcn.weight             (5 * C_out, C_in)
    body.block3.path5.gcn.B                  (5, N_b, N_b)
    head.main.gru.forward.w_ih               (384, 128)
    head.main.fc.weight                      (2, 128)

Batch-norm layers own ``<name>.gamma`` and ``<name>.beta`` as learnable
parameters and ``<name>.running_mean`` / ``<name>.running_var`` as buffers.
Heads other than ``main`` are used only while training.
"""

import hashlib
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError, DimensionError
from core.ops import BatchNormState, initial_uniform
from core.recurrent import GRUParams
from core.tensor import Tensor, get_default_dtype
from graph.skeleton import BodyVariant, build_partition, build_topology

logger = logging.getLogger(__name__)

FEATURE_DIM = 128
HIDDEN_SIZE = 128
N_MFCC = 13
PATH_KERNELS = (3, 5)
PATH_RADIUS = {3: 1, 5: 2}
VISUAL_CHANNELS = ((1, 32), (32, 64), (64, 128))
BODY_CHANNELS = ((3, 32), (32, 64), (64, 128))

INFERENCE = "inference"
TRAINING = "training"


class ModelMode(str, Enum):
    FABULIGHT = "fabulight"
    LIGHTASD = "lightasd"


# Heads per mode and the modalities each one consumes.
HEAD_REGISTRY: Dict[ModelMode, Dict[str, Tuple[str, ...]]] = {
    ModelMode.FABULIGHT: {"main": ("face", "audio", "body"), "face": ("face",), "body": ("body",)},
    ModelMode.LIGHTASD: {"main": ("face", "audio"), "face": ("face",)},
}


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: Tuple[int, ...]
    init: str  # uniform | zeros | ones | adjacency
    fan_in: int = 0
    scope: str = INFERENCE
    layer: str = ""


@dataclass(frozen=True)
class ArchitectureSpec:
    mode: ModelMode = ModelMode.FABULIGHT
    body_variant: BodyVariant = BodyVariant.WHOLE
    face_size: int = 112

    def __post_init__(self):
        object.__setattr__(self, "mode", ModelMode(self.mode))
        object.__setattr__(self, "body_variant", BodyVariant(self.body_variant))
        if self.face_size < 8 or self.face_size % 8:
            raise ConfigurationError(
                f"Face size must be a positive multiple of 8, got {self.face_size}"
            )

    @classmethod
    def from_config(cls, config) -> "ArchitectureSpec":
        return cls(mode=config.mode, body_variant=config.body_variant, face_size=config.face_size)

    @classmethod
    def from_name(cls, name: str, face_size: int = 112) -> "ArchitectureSpec":
        """``lightasd``, ``fabulight-upper`` or ``fabulight-whole``."""
        if name == "lightasd":
            return cls(ModelMode.LIGHTASD, BodyVariant.WHOLE, face_size)
        if name.startswith("fabulight-"):
            return cls(ModelMode.FABULIGHT, BodyVariant(name.split("-", 1)[1]), face_size)
        raise ConfigurationError(f"Unknown configuration name '{name}'")

    @property
    def name(self) -> str:
        if self.mode is ModelMode.LIGHTASD:
            return "lightasd"
        return f"fabulight-{self.body_variant.value}"

    @property
    def uses_body(self) -> bool:
        return self.mode is ModelMode.FABULIGHT

    @property
    def n_joints(self) -> int:
        return self.body_variant.n_joints

    @property
    def heads(self) -> Dict[str, Tuple[str, ...]]:
        return HEAD_REGISTRY[self.mode]

    def architecture_hash(self) -> str:
        """SHA-256 over the configuration and every parameter name and shape."""
        payload = {
            "mode": self.mode.value,
            "body_variant": self.body_variant.value if self.uses_body else None,
            "face_size": self.face_size,
            "params": [(p.name, list(p.shape)) for p in self.parameter_layout()],
            "buffers": [(name, channels) for name, channels in self.batch_norm_layers()],
        }
        encoded = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(encoded).hexdigest()

    # Layout
    def parameter_layout(self) -> List[ParamSpec]:
        specs: List[ParamSpec] = []
        for stream in ("face", "audio"):
            specs.extend(self._visual_layout(stream))
        if self.uses_body:
            specs.extend(self._body_layout())
        for head in self.heads:
            specs.extend(self._head_layout(head))
        return specs

    def batch_norm_layers(self) -> List[Tuple[str, int]]:
        layers = []
        for spec in self.parameter_layout():
            if spec.name.endswith(".gamma"):
                layers.append((spec.name[: -len(".gamma")], spec.shape[0]))
        return layers

    def _bn(self, name: str, channels: int, scope: str = INFERENCE) -> List[ParamSpec]:
        return [
            ParamSpec(f"{name}.gamma", (channels,), "ones", scope=scope, layer=name),
            ParamSpec(f"{name}.beta", (channels,), "zeros", scope=scope, layer=name),
        ]

    def _visual_layout(self, stream: str) -> List[ParamSpec]:
        specs = []
        for b, (c_in, c_out) in enumerate(VISUAL_CHANNELS, start=1):
            block = f"{stream}.block{b}"
            for k in PATH_KERNELS:
                path = f"{block}.path{k}"
                spatial = (k, k) if stream == "face" else (k,)
                fan_spatial = c_in * int(np.prod(spatial))
                specs.append(
                    ParamSpec(
                        f"{path}.spatial.weight",
                        (c_out, c_in) + spatial,
                        "uniform",
                        fan_spatial,
                        layer=f"{path}.spatial",
                    )
                )
                specs.extend(self._bn(f"{path}.spatial_bn", c_out))
                specs.append(
                    ParamSpec(
                        f"{path}.temporal.weight",
                        (c_out, c_out, k),
                        "uniform",
                        c_out * k,
                        layer=f"{path}.temporal",
                    )
                )
                specs.extend(self._bn(f"{path}.temporal_bn", c_out))
            specs.append(
                ParamSpec(
                    f"{block}.merge.weight",
                    (c_out, c_out),
                    "uniform",
                    c_out,
                    layer=f"{block}.merge",
                )
            )
            specs.extend(self._bn(f"{block}.merge_bn", c_out))
        return specs

    def _body_layout(self) -> List[ParamSpec]:
        n = self.n_joints
        specs = self._bn("body.input_bn", 3 * n)
        for b, (c_in, c_out) in enumerate(BODY_CHANNELS, start=1):
            block = f"body.block{b}"
            for k in PATH_KERNELS:
                path = f"{block}.path{k}"
                gcn = f"{path}.gcn"
                specs += [
                    ParamSpec(
                        f"{path}.gcn.weight", (k * c_out, c_in), "uniform", c_in, layer=gcn
                    ),
                    ParamSpec(f"{path}.gcn.bias", (k * c_out,), "zeros", layer=gcn),
                    ParamSpec(f"{path}.gcn.B", (k, n, n), "adjacency", layer=gcn),
                ]
                specs.extend(self._bn(f"{path}.gcn_bn", c_out))
                specs += [
                    ParamSpec(
                        f"{path}.temporal.weight",
                        (c_out, c_out, k),
                        "uniform",
                        c_out * k,
                        layer=f"{path}.temporal",
                    ),
                    ParamSpec(f"{path}.temporal.bias", (c_out,), "zeros", layer=f"{path}.temporal"),
                ]
                specs.extend(self._bn(f"{path}.temporal_bn", c_out))
            merge = f"{block}.merge"
            specs += [
                ParamSpec(
                    f"{block}.merge.weight", (c_out, c_out), "uniform", c_out, layer=merge
                ),
                ParamSpec(f"{block}.merge.bias", (c_out,), "zeros", layer=merge),
            ]
            specs.extend(self._bn(f"{block}.merge_bn", c_out))
        return specs

    def _head_layout(self, head: str) -> List[ParamSpec]:
        scope = INFERENCE if head == "main" else TRAINING
        prefix = f"head.{head}"
        h, d = HIDDEN_SIZE, FEATURE_DIM
        specs = []
        for direction in ("forward", "backward"):
            gru = f"{prefix}.gru.{direction}"
            specs += [
                ParamSpec(f"{gru}.w_ih", (3 * h, d), "uniform", h, scope, gru),
                ParamSpec(f"{gru}.w_hh", (3 * h, h), "uniform", h, scope, gru),
                ParamSpec(f"{gru}.b_ih", (3 * h,), "zeros", scope=scope, layer=gru),
                ParamSpec(f"{gru}.b_hh", (3 * h,), "zeros", scope=scope, layer=gru),
            ]
        specs += [
            ParamSpec(f"{prefix}.fc.weight", (2, h), "uniform", h, scope, f"{prefix}.fc"),
            ParamSpec(f"{prefix}.fc.bias", (2,), "zeros", scope=scope, layer=f"{prefix}.fc"),
        ]
        return specs


class WeightStore:
    """Named parameters and batch-norm states of one architecture.

    Forward passes over a store in inference mode only read it; a training
    step mutates parameters, gradients and running statistics and must own
    the store exclusively.
    """

    def __init__(
        self,
        spec: ArchitectureSpec,
        params: Mapping[str, Tensor],
        buffers: Mapping[str, np.ndarray],
    ):
        self.spec = spec
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        for p in spec.parameter_layout():
            if p.name not in params:
                raise DimensionError(f"Weight store is missing parameter '{p.name}'")
            tensor = params[p.name]
            if tensor.shape != p.shape:
                raise DimensionError(
                    f"Parameter '{p.name}' has shape {tensor.shape}, expected {p.shape}"
                )
            tensor.requires_grad = True
            self.params[p.name] = tensor
        extra = set(params) - set(self.params)
        if extra:
            raise DimensionError(f"Unknown parameters for {spec.name}: {sorted(extra)[:5]}")

        self.bn: Dict[str, BatchNormState] = {}
        for name, channels in spec.batch_norm_layers():
            state = BatchNormState(
                gamma=self.params[f"{name}.gamma"],
                beta=self.params[f"{name}.beta"],
                running_mean=buffers.get(f"{name}.running_mean"),
                running_var=buffers.get(f"{name}.running_var"),
            )
            state.validate()
            self.bn[name] = state
        self._scopes = {p.name: p.scope for p in spec.parameter_layout()}

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).dtype

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.params[name]
        except KeyError:
            raise ConfigurationError(f"No parameter '{name}' in {self.spec.name} store") from None

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def gru(self, prefix: str) -> GRUParams:
        return GRUParams(
            w_ih=self[f"{prefix}.w_ih"],
            w_hh=self[f"{prefix}.w_hh"],
            b_ih=self[f"{prefix}.b_ih"],
            b_hh=self[f"{prefix}.b_hh"],
        )

    def named_parameters(
        self, scope: Optional[str] = None, prefixes: Sequence[str] = ()
    ) -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self.params.items():
            if scope is not None and self._scopes[name] != scope:
                continue
            if prefixes and not name.startswith(tuple(prefixes)):
                continue
            yield name, tensor

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        result: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, state in self.bn.items():
            if state.running_mean is not None and state.running_var is not None:
                result[f"{name}.running_mean"] = state.running_mean
                result[f"{name}.running_var"] = state.running_var
        return result

    def set_training(self, training: bool) -> None:
        for state in self.bn.values():
            state.training = training

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def parameter_count(self, scope: Optional[str] = None) -> int:
        return sum(t.size for _, t in self.named_parameters(scope))


def initialize_weights(spec: ArchitectureSpec, seed: int = 0, dtype=None) -> WeightStore:
    """Seeded initialisation: uniform(±1/sqrt(fan_in)) weights, zero biases,
    unit BN scales and the normalised partition matrices for every B copy."""
    dtype = np.dtype(dtype or get_default_dtype())
    rng = np.random.default_rng(seed)
    partitions = {}
    if spec.uses_body:
        topology = build_topology(spec.body_variant)
        partitions = {k: build_partition(topology, r) for k, r in PATH_RADIUS.items()}

    params: Dict[str, Tensor] = OrderedDict()
    for p in spec.parameter_layout():
        if p.init == "uniform":
            data = initial_uniform(rng, p.shape, p.fan_in, dtype)
        elif p.init == "ones":
            data = np.ones(p.shape)
        elif p.init == "adjacency":
            kernel = p.shape[0]
            data = partitions[kernel].stacked_B().copy()
        else:
            data = np.zeros(p.shape)
        params[p.name] = Tensor(data.astype(dtype), requires_grad=True, dtype=dtype)

    buffers = {}
    for name, channels in spec.batch_norm_layers():
        buffers[f"{name}.running_mean"] = np.zeros(channels, dtype=dtype)
        buffers[f"{name}.running_var"] = np.ones(channels, dtype=dtype)

    store = WeightStore(spec, params, buffers)
    logger.debug(
        f"Initialised {spec.name} weights ({store.parameter_count()} parameters, seed {seed})"
    )
    return store
