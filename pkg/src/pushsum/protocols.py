"""The three averaging protocols as state machines, plus their matrix forms.

The state machines mirror what each agent would run locally. The matrix
builders reproduce the same update as a single linear map over the full
system state, which gives an independent evolution to certify runs
against: simulating step by step and multiplying the per-iteration
matrices must agree to near machine precision.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .graphs import DirectedGraph, Edge
from .oracle import check_stochastic
from .schedules import IterationEvent


class ProtocolViolation(RuntimeError):
    """A message or state transition broke a protocol guarantee."""


# ---------------------------------------------------------------------------
# synchronous protocols


def equal_weight_matrix(g: DirectedGraph) -> np.ndarray:
    """Row-stochastic averaging matrix: row i weights each in-neighbor equally.

    Requires a self-loop at every node so each agent keeps a share of its
    own value; positive entries are then at least 1/n.
    """
    for i in range(g.n):
        if not g.has_edge(i, i):
            raise ValueError(f"node {i} lacks a self-loop")
    a = np.zeros((g.n, g.n))
    for i in range(g.n):
        neighbors = g.in_neighbors(i)
        weight = 1.0 / len(neighbors)
        for j in neighbors:
            a[i, j] = weight
    return a


def ordinary_step(a: np.ndarray, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """One linear consensus update x' = A x with a row-stochastic A."""
    a = np.asarray(a, dtype=float)
    if not check_stochastic(a, "row", tol):
        raise ValueError("update matrix is not row-stochastic")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != a.shape[0]:
        raise ValueError(f"vector length {x.shape[0]} does not match matrix {a.shape}")
    return a @ x


def pushsum_matrix(g: DirectedGraph) -> np.ndarray:
    """Column-stochastic mass-splitting matrix: column j spreads 1/out_degree(j).

    Entry (i, j) is 1/out_degree(j) when the edge (j, i) exists. With
    self-loops everywhere the positive entries are at least 1/n.
    """
    for i in range(g.n):
        if not g.has_edge(i, i):
            raise ValueError(f"node {i} lacks a self-loop")
    w = np.zeros((g.n, g.n))
    for j in range(g.n):
        share = 1.0 / g.out_degree(j)
        for i in g.out_neighbors(j):
            w[i, j] = share
    return w


def push_sum_step(
    g: DirectedGraph, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One push-sum round: every node splits both masses across out-neighbors.

    Returns the new (x, y, estimate) where estimate = x / y. Computed by
    per-node summation, not matrix multiplication, so it can be checked
    against :func:`pushsum_matrix` independently.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if (y <= 0).any():
        raise ProtocolViolation("weight mass must stay positive")
    shares = np.array([1.0 / g.out_degree(j) for j in range(g.n)])
    new_x = np.zeros(g.n)
    new_y = np.zeros(g.n)
    for i in range(g.n):
        for j in g.in_neighbors(i):
            new_x[i] += x[j] * shares[j]
            new_y[i] += y[j] * shares[j]
    if (new_y <= 0).any():
        raise ProtocolViolation("a node ended up with zero weight mass")
    return new_x, new_y, new_x / new_y


# ---------------------------------------------------------------------------
# robust asynchronous protocol


@dataclass
class AgentState:
    """One node's masses and message counters.

    ``sent_x``/``sent_y`` are running totals of mass broadcast so far;
    ``received_x[j]``/``received_y[j]`` record the last totals accepted
    from in-neighbor j. The difference between a neighbor's sent total
    and our received record is exactly the mass still in flight (or lost)
    on that link, which is what makes retransmission-free recovery work.
    """

    x: float
    y: float = 1.0
    sent_x: float = 0.0
    sent_y: float = 0.0
    received_x: dict[int, float] = field(default_factory=dict)
    received_y: dict[int, float] = field(default_factory=dict)

    def wake(self, out_degree: int) -> tuple[float, float]:
        """Split local mass into out_degree+1 shares, keep one, bank the rest.

        Returns the updated (sent_x, sent_y) totals; broadcasting those
        totals is all the transmission the protocol needs.
        """
        share = 1.0 / (out_degree + 1)
        self.sent_x += self.x * share
        self.sent_y += self.y * share
        self.x *= share
        self.y *= share
        return self.sent_x, self.sent_y

    def receive(self, sender: int, sent_x: float, sent_y: float) -> None:
        """Fold in everything the sender ever sent that we have not yet seen.

        Only the weight-side total is guarded against decreasing: weight
        mass is positive throughout, so its running total can only grow,
        while a value-side total may shrink when value masses are negative.
        """
        last_x = self.received_x.get(sender, 0.0)
        last_y = self.received_y.get(sender, 0.0)
        if sent_y < last_y:
            raise ProtocolViolation(
                f"sender {sender} reported a decreasing weight total"
            )
        self.x += sent_x - last_x
        self.y += sent_y - last_y
        self.received_x[sender] = sent_x
        self.received_y[sender] = sent_y


@dataclass(frozen=True)
class BufferState:
    """Undelivered mass sitting on one edge, derived from the counters."""

    edge: Edge
    pending_x: float
    pending_y: float


class SystemState:
    """All agents of a robust run plus the per-edge pending masses they imply.

    The base graph must have no self-loops; out-degrees are static. Edges
    are kept in canonical sorted order, which fixes the buffer layout
    shared with :func:`mass_flow_matrix`.
    """

    def __init__(self, graph: DirectedGraph, x0: Sequence[float]):
        if graph.non_loop_edges != graph.edges:
            raise ValueError("robust runs use a base graph without self-loops")
        if len(x0) != graph.n:
            raise ValueError(f"x0 has length {len(x0)}, graph has {graph.n} nodes")
        self.graph = graph
        self.agents = [AgentState(x=float(v)) for v in x0]
        self.iteration = 0
        self._edge_set = set(graph.edges)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self.graph.edges

    def step(self, event: IterationEvent) -> None:
        """Apply one iteration: wake phase first, then deliveries.

        All shares are computed from each node's state at entry to the
        iteration (wakes only touch the waking node), and deliveries use
        the freshly updated running totals.
        """
        broadcasts: dict[int, tuple[float, float]] = {}
        for i in sorted(event.wake):
            broadcasts[i] = self.agents[i].wake(self.graph.out_degree(i))
        for i, j in sorted(event.delivered):
            if (i, j) not in self._edge_set:
                raise ProtocolViolation(f"delivery on unknown edge ({i}, {j})")
            if i not in broadcasts:
                raise ProtocolViolation(f"edge ({i}, {j}) delivered but node {i} never woke")
            self.agents[j].receive(i, *broadcasts[i])
        self.iteration += 1

    def pending(self, edge: Edge) -> tuple[float, float]:
        """Mass sent on ``edge`` but not yet delivered: sender total minus receiver record."""
        i, j = edge
        sender = self.agents[i]
        receiver = self.agents[j]
        return (
            sender.sent_x - receiver.received_x.get(i, 0.0),
            sender.sent_y - receiver.received_y.get(i, 0.0),
        )

    def buffers(self) -> list[BufferState]:
        return [BufferState(e, *self.pending(e)) for e in self.edges]

    def x_vector(self) -> np.ndarray:
        return np.array([a.x for a in self.agents])

    def y_vector(self) -> np.ndarray:
        return np.array([a.y for a in self.agents])

    def pending_x_vector(self) -> np.ndarray:
        return np.array([self.pending(e)[0] for e in self.edges])

    def pending_y_vector(self) -> np.ndarray:
        return np.array([self.pending(e)[1] for e in self.edges])

    def stacked_x(self) -> np.ndarray:
        """Agent x-masses followed by per-edge pending x-masses."""
        return np.concatenate([self.x_vector(), self.pending_x_vector()])

    def stacked_y(self) -> np.ndarray:
        return np.concatenate([self.y_vector(), self.pending_y_vector()])

    def estimates(self) -> np.ndarray:
        """Per-agent average estimate x/y; buffers excluded."""
        y = self.y_vector()
        if (y <= 0).any():
            raise ProtocolViolation("weight mass must stay positive")
        return self.x_vector() / y

    def ratios(self) -> np.ndarray:
        """Per-edge pending ratio: pending_x / pending_y where pending_y > 0, else 0."""
        u = self.pending_x_vector()
        v = self.pending_y_vector()
        out = np.zeros(len(v))
        positive = v > 0
        out[positive] = u[positive] / v[positive]
        return out

    def snapshot_lines(self) -> list[str]:
        """Full-precision text snapshot; floats use repr so parsing round-trips."""
        lines = []
        for i, a in enumerate(self.agents):
            lines.append(
                f"agent={i} x={a.x!r} y={a.y!r} sent_x={a.sent_x!r} sent_y={a.sent_y!r}"
            )
        for b in self.buffers():
            lines.append(
                f"buffer={b.edge[0]}->{b.edge[1]} "
                f"pending_x={b.pending_x!r} pending_y={b.pending_y!r}"
            )
        return lines


def mass_flow_matrix(graph: DirectedGraph, event: IterationEvent) -> np.ndarray:
    """Column-stochastic (n+m)x(n+m) matrix for one iteration over agents and buffers.

    Column i of the agent block routes x_i: an awake node keeps one share
    of out_degree+1 and sends one share per out-edge, to the neighbor if
    the link delivered and into the edge's buffer otherwise. A buffer
    column dumps its whole content to the receiver on delivery and holds
    it otherwise. Positive entries are at least 1/(max out-degree + 1),
    which is at least 1/n on a loop-free graph.
    """
    n = graph.n
    edges = graph.edges
    m = len(edges)
    buffer_of = {e: n + h for h, e in enumerate(edges)}
    flow = np.zeros((n + m, n + m))
    for i in range(n):
        if i in event.wake:
            share = 1.0 / (graph.out_degree(i) + 1)
            flow[i, i] = share
            for j in graph.out_neighbors(i):
                if (i, j) in event.delivered:
                    flow[j, i] = share
                else:
                    flow[buffer_of[(i, j)], i] = share
        else:
            flow[i, i] = 1.0
    for h, (i, j) in enumerate(edges):
        col = n + h
        if i in event.wake and (i, j) in event.delivered:
            flow[j, col] = 1.0
        else:
            flow[col, col] = 1.0
    return flow


def estimate_update_matrix(
    window: np.ndarray,
    y_start: np.ndarray,
    y_end: np.ndarray,
    pending_y_start: np.ndarray,
    pending_y_end: np.ndarray,
) -> np.ndarray:
    """Rescale a window product into the map acting on estimates and pending ratios.

    ``window`` is the (n+m)x(n+m) product of mass-flow matrices across one
    window; the y-vectors are the agent weights at its start and end, the
    pending vectors the buffer weights. Zero pending weights invert to
    zero rather than infinity, so rows of buffers that are empty at the
    window's end come out all zero; every other row sums to one.
    """
    w = np.asarray(window, dtype=float)
    y0 = np.asarray(y_start, dtype=float)
    y1 = np.asarray(y_end, dtype=float)
    v0 = np.asarray(pending_y_start, dtype=float)
    v1 = np.asarray(pending_y_end, dtype=float)
    if (y0 <= 0).any() or (y1 <= 0).any():
        raise ValueError("agent weights must be strictly positive")
    n = y0.shape[0]
    m = v0.shape[0]
    if w.shape != (n + m, n + m):
        raise ValueError(f"window has shape {w.shape}, expected {(n + m, n + m)}")
    recip_v1 = np.where(v1 > 0, np.divide(1.0, v1, where=v1 > 0), 0.0)
    row_scale = np.concatenate([1.0 / y1, recip_v1])
    col_scale = np.concatenate([y0, v0])
    return w * row_scale[:, None] * col_scale[None, :]
