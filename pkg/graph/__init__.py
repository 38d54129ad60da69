"""
Skeleton pose graphs: COCO topologies, hop distances and partition matrices.
"""

from .skeleton import (
    BodyVariant,
    PartitionedAdjacency,
    SkeletonTopology,
    build_partition,
    build_topology,
    hop_distance,
    normalize_adjacency,
)

__all__ = [
    "BodyVariant",
    "PartitionedAdjacency",
    "SkeletonTopology",
    "build_partition",
    "build_topology",
    "hop_distance",
    "normalize_adjacency",
]
