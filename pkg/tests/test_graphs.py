import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushsum.graphs import (
    DirectedGraph,
    graph_of_matrix,
    is_strongly_connected,
    reachable_set,
    ring_with_chord,
    union_graphs,
)


def loops(n):
    return tuple((i, i) for i in range(n))


class TestDirectedGraph:
    def test_edges_are_deduplicated_and_sorted(self):
        g = DirectedGraph(3, [(2, 0), (0, 1), (0, 1), (1, 2)])
        assert g.edges == ((0, 1), (1, 2), (2, 0))

    def test_out_of_range_edge_rejected(self):
        with pytest.raises(ValueError, match="outside node range"):
            DirectedGraph(2, [(0, 2)])

    def test_loop_policies(self):
        DirectedGraph(2, loops(2) + ((0, 1),), "required")
        with pytest.raises(ValueError, match="lack the required self-loop"):
            DirectedGraph(2, [(0, 0), (0, 1)], "required")
        with pytest.raises(ValueError, match="forbidden"):
            DirectedGraph(2, [(0, 0), (0, 1)], "forbidden")

    def test_loop_conversions(self):
        g = DirectedGraph(3, [(0, 1), (1, 2), (2, 0)], "forbidden")
        withloops = g.with_self_loops()
        assert withloops.self_loops == "required"
        assert set(withloops.edges) == set(g.edges) | set(loops(3))
        assert withloops.without_self_loops() == g

    def test_neighbor_queries(self):
        g = DirectedGraph(3, [(0, 1), (0, 2), (2, 0)])
        assert g.out_neighbors(0) == (1, 2)
        assert g.in_neighbors(0) == (2,)
        assert g.out_degree(0) == 2 and g.in_degree(1) == 1
        assert g.has_edge(2, 0) and not g.has_edge(1, 0)


class TestStrongConnectivity:
    def test_mutual_pair(self):
        assert is_strongly_connected(DirectedGraph(2, [(0, 1), (1, 0)]))

    def test_one_way_pair(self):
        assert not is_strongly_connected(DirectedGraph(2, [(0, 1)]))

    def test_directed_ring(self):
        assert is_strongly_connected(DirectedGraph(5, [(i, (i + 1) % 5) for i in range(5)]))

    def test_exhaustive_against_transitive_closure(self):
        # brute-force oracle: boolean transitive closure, all loop-free
        # digraphs up to n = 4 (self-loops cannot affect connectivity)
        def closure_connected(n, edges):
            a = np.eye(n, dtype=bool)
            for i, j in edges:
                a[i, j] = True
            for _ in range(n):
                a = a | (a @ a)
            return bool(a.all())

        for n in (1, 2, 3, 4):
            pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
            for bits in itertools.product((0, 1), repeat=len(pairs)):
                edges = tuple(p for p, b in zip(pairs, bits) if b)
                g = DirectedGraph(n, edges)
                assert is_strongly_connected(g) == closure_connected(n, edges)


class TestUnion:
    def test_simple_union(self):
        a = DirectedGraph(2, [(0, 1)])
        b = DirectedGraph(2, [(1, 0)])
        assert union_graphs([a, b]).edges == ((0, 1), (1, 0))

    def test_empty_union(self):
        assert union_graphs([DirectedGraph(2, []), DirectedGraph(2, [])]).edges == ()

    def test_idempotent(self):
        a = DirectedGraph(2, [(0, 1)])
        assert union_graphs([a, a]).edges == ((0, 1),)

    def test_mismatched_node_counts(self):
        with pytest.raises(ValueError, match="mismatch"):
            union_graphs([DirectedGraph(2, []), DirectedGraph(3, [])])

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_edge_in_union_iff_in_some_input(self, data):
        n = data.draw(st.integers(2, 4))
        pairs = [(i, j) for i in range(n) for j in range(n)]
        graphs = [
            DirectedGraph(n, data.draw(st.lists(st.sampled_from(pairs), max_size=8)))
            for _ in range(data.draw(st.integers(1, 4)))
        ]
        union = set(union_graphs(graphs).edges)
        for i, j in pairs:
            assert ((i, j) in union) == any((i, j) in set(g.edges) for g in graphs)


class TestReachability:
    def test_self_loops_only(self):
        gs = [DirectedGraph(3, loops(3))] * 4
        assert reachable_set(gs, 0, 0, 3) == {0}

    def test_edge_then_loops(self):
        g0 = DirectedGraph(2, loops(2) + ((0, 1),))
        g1 = DirectedGraph(2, loops(2))
        assert reachable_set([g0, g1], 0, 0, 1) == {0, 1}

    def test_chained_edges(self):
        g0 = DirectedGraph(3, loops(3) + ((0, 1),))
        g1 = DirectedGraph(3, loops(3) + ((1, 2),))
        assert reachable_set([g0, g1], 0, 0, 1) == {0, 1, 2}

    def test_origin_out_of_range(self):
        with pytest.raises(ValueError, match="origin"):
            reachable_set([DirectedGraph(2, loops(2))], 5, 0, 0)

    def test_monotone_with_self_loops(self):
        rng = np.random.default_rng(7)
        pairs = [(i, j) for i in range(4) for j in range(4) if i != j]
        for _ in range(50):
            gs = []
            for _ in range(6):
                picked = [p for p in pairs if rng.random() < 0.25]
                gs.append(DirectedGraph(4, loops(4) + tuple(picked)))
            previous = set()
            for stop in range(6):
                current = reachable_set(gs, 0, 0, stop)
                assert previous <= current
                previous = set(current)


class TestGraphOfMatrix:
    def test_identity_gives_loops(self):
        assert graph_of_matrix(np.eye(3)).edges == loops(3)

    def test_below_threshold_drops_edge(self):
        a = np.zeros((2, 2))
        a[1, 0] = 0.4
        assert not graph_of_matrix(a, alpha=0.5).has_edge(0, 1)

    def test_above_threshold_keeps_edge(self):
        a = np.zeros((2, 2))
        a[1, 0] = 0.6
        assert graph_of_matrix(a, alpha=0.5).has_edge(0, 1)

    def test_boundary_entry_survives(self):
        a = np.zeros((2, 2))
        a[1, 0] = 0.5
        assert graph_of_matrix(a, alpha=0.5).has_edge(0, 1)

    def test_transpose_convention(self):
        # entry (j, i) creates edge i -> j
        a = np.zeros((2, 2))
        a[0, 1] = 1.0
        g = graph_of_matrix(a)
        assert g.edges == ((1, 0),)

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            graph_of_matrix(np.array([[0.0, -1.0], [0.0, 0.0]]))


def test_ring_with_chord_is_strongly_connected():
    for n in (2, 3, 5, 8):
        assert is_strongly_connected(ring_with_chord(n))
        assert ring_with_chord(n).non_loop_edges == ring_with_chord(n).edges
