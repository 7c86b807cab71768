import numpy as np
import pytest
from hypothesis import given, strategies as st

from trafficdfa import graph
from trafficdfa.graph import (
    DisconnectedGraphError,
    Network,
    all_pairs_shortest_paths,
    canonical_shortest_path,
    generate_scale_free,
    load_edge_list,
    save_edge_list,
    shortest_next_hops,
)

import reference


def random_connected_graph(n, p, seed):
    """Erdos-Renyi conditioned on connectivity (resample until connected)."""
    rng = np.random.default_rng(seed)
    while True:
        adj = [[] for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    adj[i].append(j)
                    adj[j].append(i)
        try:
            net = Network(adj)
            net.dist
            return net
        except (DisconnectedGraphError, ValueError):
            continue


class TestGenerate:
    def test_paper_scale_mean_degree(self):
        net = generate_scale_free(1000, 3, seed=5)
        assert net.node_count == 1000
        mean_k = net.degree.mean()
        assert 5.9 < mean_k < 6.0  # 2*m minus the clique deficit

    def test_k4_saturation(self):
        net = generate_scale_free(4, 3, seed=1)
        assert net.edge_count == 6
        assert all(len(net.adjacency[i]) == 3 for i in range(4))

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            generate_scale_free(3, 3, seed=0)
        with pytest.raises(ValueError):
            generate_scale_free(10, 0, seed=0)

    def test_deterministic_for_seed(self):
        a = generate_scale_free(200, 3, seed=9)
        b = generate_scale_free(200, 3, seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a.adjacency, b.adjacency))
        c = generate_scale_free(200, 3, seed=10)
        assert any(
            not np.array_equal(x, y) for x, y in zip(a.adjacency, c.adjacency)
        )

    def test_degree_sum_is_twice_edges(self):
        net = generate_scale_free(300, 3, seed=3)
        assert net.degree.sum() == 2 * net.edge_count

    def test_connected(self):
        net = generate_scale_free(500, 2, seed=4)
        assert (net.dist < np.iinfo(np.int16).max).all()

    def test_heavy_tail_ccdf_slope(self):
        # rank-frequency regression over an ensemble; gamma ~ 3 for
        # preferential attachment means a CCDF exponent near 2
        degrees = np.concatenate(
            [generate_scale_free(1000, 3, seed=s).degree for s in range(50)]
        )
        slope = reference.ccdf_tail_slope(degrees, k_min=6)
        assert 1.5 <= slope <= 2.5

    def test_hub_is_max_degree(self):
        net = generate_scale_free(400, 3, seed=8)
        assert net.degree[net.hub_index] == net.degree.max()


class TestNetworkValidation:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            Network([[0, 1], [0]])

    def test_rejects_asymmetry(self):
        with pytest.raises(ValueError, match="asymmetric"):
            Network([[1], []])

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ValueError, match="duplicate"):
            Network([[1, 1], [0, 0]])

    def test_disconnected_raises_on_dist(self):
        net = Network([[1], [0], [3], [2]])
        with pytest.raises(DisconnectedGraphError):
            all_pairs_shortest_paths(net)


class TestShortestPaths:
    def test_path_graph(self, path_net):
        d = path_net.dist
        assert d[0, 2] == 2
        assert d[0, 3] == 3

    def test_star_two_leaves(self):
        star = Network([[1, 2, 3], [0], [0], [0]])
        assert star.dist[1, 2] == 2

    def test_matches_floyd_warshall(self):
        net = random_connected_graph(20, 0.2, seed=1)
        expect = reference.floyd_warshall(net.adjacency)
        for i in range(20):
            for j in range(20):
                assert net.dist[i, j] == expect[i][j]

    def test_symmetric_zero_diagonal(self, small_net):
        d = small_net.dist
        assert np.array_equal(d, d.T)
        assert (np.diag(d) == 0).all()

    def test_dist_one_iff_adjacent(self, small_net):
        d = small_net.dist
        for i in range(small_net.node_count):
            adjacent = set(int(x) for x in small_net.adjacency[i])
            assert adjacent == set(np.flatnonzero(d[i] == 1).tolist())

    @given(st.integers(0, 10_000))
    def test_triangle_inequality_sampled(self, seed):
        net = generate_scale_free(40, 2, seed=0)
        rng = np.random.default_rng(seed)
        i, j, k = rng.integers(0, 40, size=3)
        assert net.dist[i, j] <= net.dist[i, k] + net.dist[k, j]


class TestNextHops:
    def test_adjacent_destination(self, small_net):
        for i in range(small_net.node_count):
            for j in small_net.adjacency[i]:
                assert list(shortest_next_hops(small_net, i, int(j))) == [int(j)]

    def test_cycle_opposite_corners(self):
        cycle = Network([[1, 3], [0, 2], [1, 3], [0, 2]])
        assert sorted(shortest_next_hops(cycle, 0, 2)) == [1, 3]

    def test_same_node_rejected(self, small_net):
        with pytest.raises(ValueError):
            shortest_next_hops(small_net, 3, 3)

    def test_all_hops_lie_on_shortest_paths(self):
        net = random_connected_graph(20, 0.18, seed=7)
        for i in range(20):
            for j in range(20):
                if i == j:
                    continue
                d = int(net.dist[i, j])
                paths = reference.enumerate_shortest_paths(net.adjacency, i, j, d)
                valid_first_hops = {p[1] for p in paths}
                hops = set(int(x) for x in shortest_next_hops(net, i, j))
                assert hops == valid_first_hops
                assert hops  # never empty on a connected graph

    def test_hops_decrease_distance(self, small_net):
        n = small_net.node_count
        rng = np.random.default_rng(0)
        for _ in range(500):
            i, j = rng.integers(0, n, 2)
            if i == j:
                continue
            for l in shortest_next_hops(small_net, int(i), int(j)):
                assert small_net.dist[l, j] == small_net.dist[i, j] - 1


class TestCanonicalPath:
    def test_single_node(self, small_net):
        assert canonical_shortest_path(small_net, 7, 7) == [7]

    def test_path_graph_unique(self, path_net):
        assert canonical_shortest_path(path_net, 0, 3) == [0, 1, 2, 3]

    def test_length_matches_dist_everywhere(self):
        net = random_connected_graph(20, 0.2, seed=3)
        for a in range(20):
            for b in range(20):
                p = canonical_shortest_path(net, a, b)
                assert len(p) - 1 == net.dist[a, b]
                assert p[0] == a and p[-1] == b
                for u, v in zip(p, p[1:]):
                    assert v in net.adjacency[u]

    def test_deterministic(self, small_net):
        p1 = canonical_shortest_path(small_net, 1, 50)
        p2 = canonical_shortest_path(small_net, 1, 50)
        assert p1 == p2


class TestEdgeListIO:
    def test_round_trip(self, tmp_path, small_net):
        path = tmp_path / "net.edges"
        save_edge_list(small_net, path)
        loaded = load_edge_list(path)
        assert loaded.node_count == small_net.node_count
        assert loaded.seed == small_net.seed
        assert all(
            np.array_equal(a, b)
            for a, b in zip(loaded.adjacency, small_net.adjacency)
        )

    def test_header_format(self, tmp_path, path_net):
        path = tmp_path / "net.edges"
        save_edge_list(path_net, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# nodes=4 seed=0"
        assert lines[1:] == ["0 1", "1 2", "2 3"]

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.edges"
        path.write_text("0 1\n")
        with pytest.raises(ValueError, match="header"):
            load_edge_list(path)
