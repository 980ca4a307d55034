"""Directed-graph primitives for consensus simulations.

Nodes are dense integers ``0..n-1``. An edge ``(i, j)`` is a link from
``i`` to ``j``. Edge sets are stored sorted and deduplicated so that
iteration order is deterministic across runs.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

Edge = tuple[int, int]

SELF_LOOP_POLICIES = ("free", "required", "forbidden")


@dataclass(frozen=True)
class DirectedGraph:
    """Fixed node set with a canonical directed edge set.

    ``self_loops`` declares the loop policy of the graph: "required"
    graphs carry a loop at every node, "forbidden" graphs carry none,
    "free" graphs may mix. Synchronous averaging runs on "required"
    graphs; the asynchronous robust protocol runs on a "forbidden" base
    graph whose loops exist only in the induced mass-flow matrices.
    """

    n: int
    edges: tuple[Edge, ...]
    self_loops: str = "free"
    _out: dict[int, tuple[int, ...]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )
    _in: dict[int, tuple[int, ...]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        if self.self_loops not in SELF_LOOP_POLICIES:
            raise ValueError(f"unknown self-loop policy {self.self_loops!r}")
        canonical = tuple(sorted({(int(i), int(j)) for i, j in self.edges}))
        for i, j in canonical:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside node range 0..{self.n - 1}")
        object.__setattr__(self, "edges", canonical)
        loops = {i for i, j in canonical if i == j}
        if self.self_loops == "required" and len(loops) != self.n:
            missing = sorted(set(range(self.n)) - loops)
            raise ValueError(f"nodes {missing} lack the required self-loop")
        if self.self_loops == "forbidden" and loops:
            raise ValueError(f"self-loops at {sorted(loops)} are forbidden for this graph")
        out: dict[int, list[int]] = {i: [] for i in range(self.n)}
        inn: dict[int, list[int]] = {i: [] for i in range(self.n)}
        for i, j in canonical:
            out[i].append(j)
            inn[j].append(i)
        object.__setattr__(self, "_out", {i: tuple(v) for i, v in out.items()})
        object.__setattr__(self, "_in", {i: tuple(sorted(v)) for i, v in inn.items()})

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return self._out[i]

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return self._in[i]

    def out_degree(self, i: int) -> int:
        return len(self._out[i])

    def in_degree(self, i: int) -> int:
        return len(self._in[i])

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._out.get(i, ())

    @property
    def non_loop_edges(self) -> tuple[Edge, ...]:
        return tuple((i, j) for i, j in self.edges if i != j)

    def with_self_loops(self) -> "DirectedGraph":
        """Copy of this graph with a loop added at every node."""
        loops = tuple((i, i) for i in range(self.n))
        return DirectedGraph(self.n, self.edges + loops, "required")

    def without_self_loops(self) -> "DirectedGraph":
        """Copy of this graph with all loops removed."""
        return DirectedGraph(self.n, self.non_loop_edges, "forbidden")


def ring_with_chord(n: int, self_loops: bool = False) -> DirectedGraph:
    """Directed ring 0->1->...->n-1->0 plus the chord (0, n//2).

    Strongly connected for every n >= 2; the chord breaks the pure-cycle
    symmetry so degrees differ across nodes.
    """
    if n < 2:
        raise ValueError("ring needs at least two nodes")
    edges = [(i, (i + 1) % n) for i in range(n)]
    chord = (0, n // 2)
    if n > 2 and chord not in edges:
        edges.append(chord)
    g = DirectedGraph(n, edges, "forbidden")
    return g.with_self_loops() if self_loops else g


def is_strongly_connected(g: DirectedGraph) -> bool:
    """True iff every node is reachable from every other along directed paths."""

    def bfs(adjacency) -> int:
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adjacency(u):
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return len(seen)

    return bfs(g.out_neighbors) == g.n and bfs(g.in_neighbors) == g.n


def union_graphs(graphs: Sequence[DirectedGraph]) -> DirectedGraph:
    """Graph over the shared node set whose edges are the union of all inputs."""
    if not graphs:
        raise ValueError("union of zero graphs is undefined")
    n = graphs[0].n
    for g in graphs[1:]:
        if g.n != n:
            raise ValueError(f"node-count mismatch: {g.n} != {n}")
    edges: set[Edge] = set()
    for g in graphs:
        edges.update(g.edges)
    return DirectedGraph(n, tuple(edges))


def reachable_set(
    graphs: Sequence[DirectedGraph], origin: int, start: int, stop: int
) -> frozenset[int]:
    """Nodes reachable from ``origin`` via one edge per iteration of ``start..stop``.

    Every step of the chain must traverse an edge of that iteration's
    graph; staying put requires a self-loop. With self-loops everywhere
    the result is monotone nondecreasing in ``stop``.
    """
    if not graphs:
        raise ValueError("empty graph sequence")
    n = graphs[0].n
    if not 0 <= origin < n:
        raise ValueError(f"origin {origin} outside node range 0..{n - 1}")
    if start > stop:
        raise ValueError(f"window start {start} exceeds stop {stop}")
    if start < 0 or stop >= len(graphs):
        raise ValueError(f"window [{start}, {stop}] not covered by the sequence")
    reached = {origin}
    for k in range(start, stop + 1):
        reached = {j for i in reached for j in graphs[k].out_neighbors(i)}
    return frozenset(reached)


def graph_of_matrix(matrix: np.ndarray, alpha: float = 0.0) -> DirectedGraph:
    """Graph induced by a nonnegative matrix after thresholding at ``alpha``.

    Entry (j, i) of the matrix creates the edge i -> j: matrix rows
    collect what a node receives, edges point along the flow of mass.
    Entries equal to ``alpha`` survive the threshold.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if (a < 0).any():
        raise ValueError("matrix entries must be nonnegative")
    n = a.shape[0]
    edges = [(i, j) for j in range(n) for i in range(n) if a[j, i] > 0 and a[j, i] >= alpha]
    return DirectedGraph(n, tuple(edges))
