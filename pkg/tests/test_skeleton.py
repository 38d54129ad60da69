from collections import deque

import numpy as np
import pytest

from core.errors import ConfigurationError, DimensionError
from graph.skeleton import (
    BodyVariant,
    build_partition,
    build_topology,
    hop_distance,
    normalize_adjacency,
    render_graph_report,
)


def bfs_distances(n, edges, source):
    neighbours = {i: set() for i in range(n)}
    for i, j in edges:
        neighbours[i].add(j)
        neighbours[j].add(i)
    dist = {source: 0}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in neighbours[node]:
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return [dist[i] for i in range(n)]


def brute_force_partition(topology, radius):
    """Literal pair-by-pair construction with independent BFS distances."""
    n = topology.n_joints
    d = [bfs_distances(n, topology.edges, i) for i in range(n)]
    centre = topology.central
    result = {}
    for r in range(-radius, radius + 1):
        a = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if r == 0:
                    a[i, j] = 1.0 if i == j else 0.0
                elif d[i][j] == abs(r):
                    centripetal = d[i][centre] <= d[j][centre]
                    if (r < 0) == centripetal:
                        a[i, j] = 1.0
        degree = np.array([a[i].sum() + 0.001 for i in range(n)])
        b = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                b[i, j] = a[i, j] / np.sqrt(degree[i] * degree[j])
        result[r] = (a, b)
    return result


VARIANTS = [BodyVariant.WHOLE, BodyVariant.UPPER]


class TestTopology:
    @pytest.mark.parametrize("variant,joints,edges", [("whole", 17, 19), ("upper", 11, 12)])
    def test_sizes(self, variant, joints, edges):
        topology = build_topology(variant)
        assert topology.n_joints == joints
        assert len(topology.edges) == edges
        assert topology.joint_names[topology.central] == "nose"

    def test_upper_body_is_prefix_of_whole(self):
        whole, upper = build_topology("whole"), build_topology("upper")
        assert upper.joint_names == whole.joint_names[:11]
        assert set(upper.edges) <= set(whole.edges)
        assert upper.joint_names[9:11] == ("left_wrist", "right_wrist")

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_hop_distance_matches_bfs(self, variant):
        topology = build_topology(variant)
        for i in range(topology.n_joints):
            expected = bfs_distances(topology.n_joints, topology.edges, i)
            assert [hop_distance(topology, i, j) for j in range(topology.n_joints)] == expected

    def test_known_distances(self):
        topology = build_topology("whole")
        assert hop_distance(topology, 0, 0) == 0
        assert hop_distance(topology, 0, 1) == 1
        # nose -> eye -> ear -> shoulder -> elbow -> wrist
        assert hop_distance(topology, 0, 9) == 5

    def test_hop_distance_index_checked(self):
        with pytest.raises(DimensionError):
            hop_distance(build_topology("upper"), 0, 11)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            build_topology("legs")


class TestPartition:
    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("radius", [1, 2])
    def test_matches_brute_force(self, variant, radius):
        topology = build_topology(variant)
        partition = build_partition(topology, radius)
        oracle = brute_force_partition(topology, radius)
        assert partition.offsets == list(range(-radius, radius + 1))
        for r, (a, b) in oracle.items():
            np.testing.assert_array_equal(partition.matrix(r), a)
            np.testing.assert_allclose(partition.normalized(r), b, rtol=1e-12, atol=0)

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("radius", [1, 2])
    def test_identity_disjointness_and_coverage(self, variant, radius):
        topology = build_topology(variant)
        partition = build_partition(topology, radius)
        hops = topology.distances()
        np.testing.assert_array_equal(partition.matrix(0), np.eye(topology.n_joints))
        total = sum(partition.matrix(r) for r in partition.offsets)
        assert total.max() <= 1.0
        np.testing.assert_array_equal(total, (hops <= radius).astype(float))

    def test_ties_go_to_centripetal(self):
        topology = build_topology("whole")
        partition = build_partition(topology, 1)
        # both eyes are one hop from the nose; eye-eye is a tie
        assert partition.matrix(-1)[1, 2] == 1.0
        assert partition.matrix(-1)[2, 1] == 1.0
        assert partition.matrix(1)[1, 2] == 0.0
        # shoulder (3 hops) -> elbow (4 hops) moves away from the nose
        assert partition.matrix(-1)[5, 7] == 1.0
        assert partition.matrix(1)[7, 5] == 1.0

    def test_stacked_b_shape(self):
        partition = build_partition(build_topology("upper"), 2)
        assert partition.stacked_B().shape == (5, 11, 11)
        assert partition.kernel_size == 5

    @pytest.mark.parametrize("radius", [0, 3, -1])
    def test_unsupported_radius(self, radius):
        with pytest.raises(ConfigurationError):
            build_partition(build_topology("whole"), radius)

    def test_normalize_adjacency_isolated_rows_stay_zero(self):
        a = np.zeros((3, 3))
        a[0, 1] = a[1, 0] = 1.0
        b = normalize_adjacency(a)
        assert np.all(b[2] == 0)
        assert b[0, 1] == pytest.approx(1.0 / 1.001)

    def test_normalize_adjacency_rejects_rectangular(self):
        with pytest.raises(DimensionError):
            normalize_adjacency(np.ones((2, 3)))


class TestGraphReport:
    def test_report_lists_joints_and_matrices(self):
        topology = build_topology("upper")
        text = render_graph_report(topology, build_partition(topology, 1))
        assert "right_wrist" in text
        assert "nose" in text
        for r in (-1, 0, 1):
            assert f"A^{r} (" in text
        assert "Partition R=1" in text
