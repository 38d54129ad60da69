"""
COCO skeleton topologies and spatial-configuration partitions.

Joints are indexed in COCO keypoint order; the nose (joint 0) is the central
node. For a distance threshold R the neighbourhood of every joint is split into
2R+1 binary matrices A^r, r = -R..R:

    r = 0   identity
    r < 0   pairs at hop distance |r| whose first joint is no farther from the
            nose than the second (centripetal, ties included)
    r > 0   pairs at hop distance |r| whose first joint is farther from the
            nose than the second (centrifugal)

Each A^r is degree-normalised into B^r = D^-1/2 A^r D^-1/2 with
D_ii = sum_k A^r_ik + eps.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from core.errors import ConfigurationError, DimensionError
from services.report_renderer import ReportRenderer

logger = logging.getLogger(__name__)

ADJACENCY_EPS = 0.001
CENTRAL_JOINT = 0

COCO_JOINTS = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

COCO_EDGES = (
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
)


class BodyVariant(str, Enum):
    WHOLE = "whole"
    UPPER = "upper"

    @property
    def n_joints(self) -> int:
        return 17 if self is BodyVariant.WHOLE else 11


@dataclass(frozen=True)
class SkeletonTopology:
    variant: BodyVariant
    joint_names: Tuple[str, ...]
    edges: Tuple[Tuple[int, int], ...]
    central: int = CENTRAL_JOINT

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def distances(self) -> np.ndarray:
        """All-pairs hop distances as an integer matrix."""
        return _hop_matrix(self)


def build_topology(variant) -> SkeletonTopology:
    """COCO-17 skeleton, or its 11-joint upper-body restriction."""
    variant = BodyVariant(variant)
    keep = variant.n_joints
    edges = tuple((i, j) for i, j in COCO_EDGES if i < keep and j < keep)
    return SkeletonTopology(variant=variant, joint_names=COCO_JOINTS[:keep], edges=edges)


_HOP_CACHE: Dict[SkeletonTopology, np.ndarray] = {}


def _hop_matrix(topology: SkeletonTopology) -> np.ndarray:
    cached = _HOP_CACHE.get(topology)
    if cached is not None:
        return cached
    n = topology.n_joints
    rows = [i for i, j in topology.edges] + [j for i, j in topology.edges]
    cols = [j for i, j in topology.edges] + [i for i, j in topology.edges]
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    hops = shortest_path(graph, method="D", directed=False, unweighted=True)
    if not np.all(np.isfinite(hops)):
        raise ConfigurationError(f"Skeleton '{topology.variant.value}' is not connected")
    hops = hops.astype(np.int64)
    hops.setflags(write=False)
    _HOP_CACHE[topology] = hops
    return hops


def hop_distance(topology: SkeletonTopology, i: int, j: int) -> int:
    n = topology.n_joints
    if not (0 <= i < n and 0 <= j < n):
        raise DimensionError(f"Joint indices ({i}, {j}) outside 0..{n - 1}")
    return int(_hop_matrix(topology)[i, j])


def normalize_adjacency(adjacency: np.ndarray, eps: float = ADJACENCY_EPS) -> np.ndarray:
    """D^-1/2 A D^-1/2 with D_ii = row sum + eps."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DimensionError(f"Adjacency must be square, got {adjacency.shape}")
    if eps <= 0:
        raise ConfigurationError(f"Normalisation eps must be positive, got {eps}")
    inv_sqrt = 1.0 / np.sqrt(adjacency.sum(axis=1) + eps)
    return inv_sqrt[:, None] * adjacency * inv_sqrt[None, :]


@dataclass
class PartitionedAdjacency:
    """Binary partition matrices A and their normalised copies B, ordered r = -R..R."""

    radius: int
    A: List[np.ndarray]
    B: List[np.ndarray]
    eps: float = ADJACENCY_EPS
    offsets: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.offsets:
            self.offsets = list(range(-self.radius, self.radius + 1))

    @property
    def kernel_size(self) -> int:
        return 2 * self.radius + 1

    def matrix(self, r: int) -> np.ndarray:
        return self.A[r + self.radius]

    def normalized(self, r: int) -> np.ndarray:
        return self.B[r + self.radius]

    def stacked_B(self) -> np.ndarray:
        """B as one (2R+1, N_b, N_b) array, r-major."""
        return np.stack(self.B, axis=0)


def build_partition(topology: SkeletonTopology, radius: int) -> PartitionedAdjacency:
    if radius not in (1, 2):
        raise ConfigurationError(f"Partition radius must be 1 or 2, got {radius}")
    hops = _hop_matrix(topology)
    to_centre = hops[:, topology.central]
    n = topology.n_joints

    closer_or_equal = to_centre[:, None] <= to_centre[None, :]
    matrices = []
    for r in range(-radius, radius + 1):
        if r == 0:
            matrices.append(np.eye(n))
            continue
        at_distance = hops == abs(r)
        branch = closer_or_equal if r < 0 else ~closer_or_equal
        matrices.append((at_distance & branch).astype(np.float64))

    normalized = [normalize_adjacency(a, ADJACENCY_EPS) for a in matrices]
    logger.debug(
        f"Built partition for {topology.variant.value} skeleton with R={radius}: "
        f"{[int(a.sum()) for a in matrices]} links per matrix"
    )
    return PartitionedAdjacency(radius=radius, A=matrices, B=normalized)


def render_graph_report(topology: SkeletonTopology, partition: PartitionedAdjacency) -> str:
    """Human-readable dump of joints, edges and every A^r / B^r matrix."""
    blocks = []
    for r in partition.offsets:
        blocks.append(
            {
                "r": r,
                "A": [" ".join(str(int(v)) for v in row) for row in partition.matrix(r)],
                "B": [" ".join(f"{v:.6f}" for v in row) for row in partition.normalized(r)],
                "links": int(partition.matrix(r).sum()),
            }
        )
    return ReportRenderer().render(
        "skeleton_report.txt.j2",
        variant=topology.variant.value,
        joints=list(enumerate(topology.joint_names)),
        edges=[(i, j, topology.joint_names[i], topology.joint_names[j]) for i, j in topology.edges],
        central=topology.joint_names[topology.central],
        radius=partition.radius,
        eps=partition.eps,
        blocks=blocks,
    )
