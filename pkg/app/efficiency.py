"""
Static parameter and multiply-accumulate (MAC) counts.

The profiler walks the architecture layer by layer with closed-form shape
arithmetic; it never instantiates weights. ``store_parameter_count`` counts the
same thing by enumerating an initialised WeightStore, and the two must agree.

MAC convention: one multiply plus one accumulate counts as one MAC. Batch
norm, activations, pooling and element-wise sums count as zero.

Rows of training-only layers (auxiliary heads) carry ``scope == "training"``
and are excluded from the headline totals.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Union

from app.model import (
    BODY_CHANNELS,
    FEATURE_DIM,
    HIDDEN_SIZE,
    INFERENCE,
    N_MFCC,
    PATH_KERNELS,
    TRAINING,
    VISUAL_CHANNELS,
    ArchitectureSpec,
    WeightStore,
)
from core.errors import ConfigurationError
from services.report_renderer import ReportRenderer

logger = logging.getLogger(__name__)

REFERENCE_FRAMES = 100


@dataclass(frozen=True)
class LayerRow:
    name: str
    params: int
    macs: int
    scope: str = INFERENCE

    @property
    def stream(self) -> str:
        return self.name.split(".", 1)[0] if not self.name.startswith("head.") else "head"


@dataclass
class EfficiencyReport:
    config: str
    frames: int
    rows: List[LayerRow] = field(default_factory=list)

    def _rows(self, scope: str) -> List[LayerRow]:
        return [row for row in self.rows if row.scope == scope]

    @property
    def total_params(self) -> int:
        return sum(row.params for row in self._rows(INFERENCE))

    @property
    def total_macs(self) -> int:
        return sum(row.macs for row in self._rows(INFERENCE))

    @property
    def training_params(self) -> int:
        return sum(row.params for row in self._rows(TRAINING))

    @property
    def training_macs(self) -> int:
        return sum(row.macs for row in self._rows(TRAINING))

    @property
    def macs_per_frame(self) -> float:
        return self.total_macs / self.frames if self.frames else 0.0

    def stream_totals(self) -> Dict[str, Dict[str, int]]:
        totals: Dict[str, Dict[str, int]] = {}
        for row in self._rows(INFERENCE):
            entry = totals.setdefault(row.stream, {"params": 0, "macs": 0})
            entry["params"] += row.params
            entry["macs"] += row.macs
        return totals

    def as_dict(self) -> Dict[str, object]:
        return {
            "config": self.config,
            "frames": self.frames,
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "macs_per_frame": self.macs_per_frame,
            "training_params": self.training_params,
            "training_macs": self.training_macs,
            "streams": self.stream_totals(),
            "rows": [asdict(row) for row in self.rows],
        }


def _pooled(length: int) -> int:
    # kernel 3, stride 2, padding 1
    return (length - 1) // 2 + 1


class _Profiler:
    def __init__(self, frames: int):
        self.frames = frames
        self.rows: List[LayerRow] = []

    def add(self, name: str, params: int, macs: int, scope: str = INFERENCE):
        self.rows.append(LayerRow(name, int(params), int(macs), scope))

    def bn(self, name: str, channels: int, scope: str = INFERENCE):
        self.add(name, 2 * channels, 0, scope)

    def visual_stream(self, stream: str, face_size: int):
        """Face (2-D spatial) or audio (1-D over coefficients) stream."""
        t = self.frames
        if stream == "face":
            positions, steps = face_size, t
        else:
            positions, steps = N_MFCC, 4 * t
        dims = 2 if stream == "face" else 1

        for b, (c_in, c_out) in enumerate(VISUAL_CHANNELS, start=1):
            block = f"{stream}.block{b}"
            if stream == "face" and b == 1:
                positions = positions // 2
            sites = positions**dims * steps
            for k in PATH_KERNELS:
                path = f"{block}.path{k}"
                self.add(f"{path}.spatial", c_out * c_in * k**dims, sites * c_out * c_in * k**dims)
                self.bn(f"{path}.spatial_bn", c_out)
                self.add(f"{path}.temporal", c_out * c_out * k, sites * c_out * c_out * k)
                self.bn(f"{path}.temporal_bn", c_out)
            self.add(f"{block}.merge", c_out * c_out, sites * c_out * c_out)
            self.bn(f"{block}.merge_bn", c_out)
            if b < len(VISUAL_CHANNELS):
                if stream == "face":
                    positions = _pooled(positions)
                else:
                    steps = _pooled(steps)

    def body_stream(self, joints: int):
        t = self.frames
        self.bn("body.input_bn", 3 * joints)
        for b, (c_in, c_out) in enumerate(BODY_CHANNELS, start=1):
            block = f"body.block{b}"
            for k in PATH_KERNELS:
                path = f"{block}.path{k}"
                pointwise = joints * t * c_in * k * c_out
                contraction = k * c_out * joints * joints * t
                self.add(
                    f"{path}.gcn",
                    k * c_out * c_in + k * c_out + k * joints * joints,
                    pointwise + contraction,
                )
                self.bn(f"{path}.gcn_bn", c_out)
                self.add(
                    f"{path}.temporal", c_out * c_out * k + c_out, joints * t * c_out * c_out * k
                )
                self.bn(f"{path}.temporal_bn", c_out)
            self.add(f"{block}.merge", c_out * c_out + c_out, joints * t * c_out * c_out)
            self.bn(f"{block}.merge_bn", c_out)

    def head(self, head: str):
        scope = INFERENCE if head == "main" else TRAINING
        h, d, t = HIDDEN_SIZE, FEATURE_DIM, self.frames
        for direction in ("forward", "backward"):
            self.add(
                f"head.{head}.gru.{direction}",
                3 * h * d + 3 * h * h + 6 * h,
                t * (3 * h * d + 3 * h * h),
                scope,
            )
        self.add(f"head.{head}.fc", 2 * h + 2, t * 2 * h, scope)


def profile(spec: ArchitectureSpec, frames: int = REFERENCE_FRAMES) -> EfficiencyReport:
    if frames < 1:
        raise ConfigurationError(f"Reference input needs at least one frame, got {frames}")
    profiler = _Profiler(frames)
    profiler.visual_stream("face", spec.face_size)
    profiler.visual_stream("audio", spec.face_size)
    if spec.uses_body:
        profiler.body_stream(spec.n_joints)
    for head in spec.heads:
        profiler.head(head)
    return EfficiencyReport(spec.name, frames, profiler.rows)


def count_params(spec: ArchitectureSpec) -> EfficiencyReport:
    """Per-layer and total parameter counts (MAC columns for a one-frame input)."""
    return profile(spec, frames=1)


def count_macs(
    spec: ArchitectureSpec, reference_frames: int = REFERENCE_FRAMES
) -> EfficiencyReport:
    return profile(spec, reference_frames)


def store_parameter_count(store: WeightStore, scope: Optional[str] = INFERENCE) -> int:
    return store.parameter_count(scope)


def percent_increase(value: float, baseline: float) -> float:
    return 100.0 * (value - baseline) / baseline if baseline else 0.0


def render_report(
    report: EfficiencyReport, baseline: Optional[EfficiencyReport] = None
) -> str:
    """Aligned text table, comparison lines against ``baseline`` and a JSON dump."""
    comparison = None
    if baseline is not None and baseline.config != report.config:
        comparison = {
            "baseline": baseline.config,
            "params": percent_increase(report.total_params, baseline.total_params),
            "macs": percent_increase(report.macs_per_frame, baseline.macs_per_frame),
        }
    dump = json.dumps(report.as_dict(), indent=2, sort_keys=True)
    return ReportRenderer().render(
        "efficiency_report.txt.j2",
        report=report,
        streams=report.stream_totals(),
        comparison=comparison,
        dump=dump,
    )


def analyze(
    spec: Union[ArchitectureSpec, str], frames: int = REFERENCE_FRAMES
) -> Dict[str, EfficiencyReport]:
    """Report for ``spec`` plus the Light-ASD baseline it is compared against."""
    if isinstance(spec, str):
        spec = ArchitectureSpec.from_name(spec)
    report = count_macs(spec, frames)
    baseline = count_macs(ArchitectureSpec.from_name("lightasd", spec.face_size), frames)
    logger.debug(
        f"{report.config}: {report.total_params} params, {report.macs_per_frame:.0f} MACs/frame"
    )
    return {"report": report, "baseline": baseline}
