"""Block bookkeeping and seeded wake/failure event generation.

A schedule partitions iterations 0, 1, 2, ... into consecutive blocks.
Within each block every link of the base graph must transmit successfully
at least once; block lengths therefore control how long the system may go
without re-establishing full connectivity. Groups of n consecutive blocks
("windows") are the granularity at which all contraction guarantees
apply, and each convergence regime caps the window lengths by a slowly
growing logarithmic bound.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .graphs import DirectedGraph, Edge, is_strongly_connected

REGIMES = ("ordinary", "pushsum", "robust")
WAKE_MODES = ("independent", "sequential")


def window_bound(regime: str, k: int, T: int, n: int, alpha: float | None = None) -> float:
    """Admissible upper limit for the k-th window length under a regime.

    All three regimes grow like log(k + T); they differ in the constant,
    which reflects how many window lengths the respective contraction
    estimate stacks in the exponent.
    """
    if k < 1:
        raise ValueError("window index starts at 1")
    if T < 0:
        raise ValueError("shift T must be nonnegative")
    if regime == "ordinary":
        if alpha is None or not 0.0 < alpha < 1.0:
            raise ValueError("ordinary regime needs an entry floor alpha in (0, 1)")
        return -math.log(k + T) / math.log(alpha)
    if regime == "pushsum":
        return math.log(k + T) / (2.0 * math.log(n))
    if regime == "robust":
        return math.log(k + T) / (6.0 * math.log(n))
    raise ValueError(f"unknown regime {regime!r}")


@dataclass(frozen=True)
class BlockSchedule:
    """Positive block lengths plus the node count that sizes windows."""

    lengths: tuple[int, ...]
    n: int
    _boundaries: tuple[int, ...] = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self) -> None:
        lengths = tuple(int(b) for b in self.lengths)
        if any(b < 1 for b in lengths):
            raise ValueError("every block length must be >= 1")
        if self.n < 1:
            raise ValueError("node count must be >= 1")
        object.__setattr__(self, "lengths", lengths)
        acc = [0]
        for b in lengths:
            acc.append(acc[-1] + b)
        object.__setattr__(self, "_boundaries", tuple(acc))

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> int:
        """Iterations covered by all blocks together."""
        return self._boundaries[-1]

    @property
    def num_windows(self) -> int:
        return len(self.lengths) // self.n

    def boundary(self, k: int) -> int:
        """Total length of the first k blocks (0 for k = 0)."""
        if k < 0:
            raise ValueError("block index must be nonnegative")
        if k > len(self.lengths):
            raise ValueError(f"schedule has only {len(self.lengths)} blocks, asked for {k}")
        return self._boundaries[k]

    def window_length(self, k: int) -> int:
        """Combined length of blocks (k-1)*n+1 .. k*n; zero for k = 0."""
        if k < 0:
            raise ValueError("window index must be nonnegative")
        if k == 0:
            return 0
        if k * self.n > len(self.lengths):
            raise ValueError(f"schedule too short for window {k} (needs {k * self.n} blocks)")
        return self.boundary(k * self.n) - self.boundary((k - 1) * self.n)

    def window_boundary(self, k: int) -> int:
        """Iteration index at which window k starts (boundary of block k*n)."""
        return self.boundary(k * self.n)

    def blocks_within(self, iterations: int) -> int:
        """Number of complete blocks contained in the first ``iterations`` iterations."""
        count = 0
        while count < len(self.lengths) and self._boundaries[count + 1] <= iterations:
            count += 1
        return count


def check_window_bound(
    schedule: BlockSchedule,
    regime: str,
    start: int,
    T: int,
    horizon: int,
    alpha: float | None = None,
) -> bool:
    """True iff every window length in ``start..horizon`` obeys the regime bound.

    The guarantee in the underlying theory is asymptotic ("for all k past
    some start"); this check is necessarily finite-horizon.
    """
    if start < 1:
        raise ValueError("start window index must be >= 1")
    for k in range(start, horizon + 1):
        if schedule.window_length(k) > window_bound(regime, k, T, schedule.n, alpha):
            return False
    return True


def logarithmic_block_lengths(
    n: int,
    regime: str,
    T: int,
    count: int,
    alpha: float | None = None,
) -> BlockSchedule:
    """Schedule of ``count`` blocks that saturates a regime bound from below.

    Every block of window k gets length max(1, floor(bound(k)/n)), so the
    window length is n*floor(bound(k)/n) <= bound(k) whenever the bound
    admits any schedule at all (window lengths can never drop below n).
    Nondecreasing, and unbounded as count grows.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if n < 2:
        raise ValueError("need at least two nodes")
    window_bound(regime, 1, T, n, alpha)  # validate regime arguments up front
    lengths = []
    for k in range(1, count + 1):
        window = (k + n - 1) // n
        bound = window_bound(regime, window, T, n, alpha)
        lengths.append(max(1, math.floor(bound / n)))
    return BlockSchedule(tuple(lengths), n)


def schedule_covering(
    n: int,
    regime: str,
    T: int,
    iterations: int,
    alpha: float | None = None,
) -> BlockSchedule:
    """Regime-generated schedule just long enough to cover ``iterations``."""
    lengths: list[int] = []
    total = 0
    window = 0
    while total < iterations:
        window += 1
        bound = window_bound(regime, window, T, n, alpha)
        b = max(1, math.floor(bound / n))
        # all n blocks of a window share one length; emit them together
        take = min(n, -(-(iterations - total) // b)) if b else n
        lengths.extend([b] * take)
        total += b * take
    if not lengths:
        lengths = [1]
    return BlockSchedule(tuple(lengths), n)


@dataclass(frozen=True)
class IterationEvent:
    """One iteration's wake-up set and the links that actually delivered."""

    wake: frozenset[int]
    delivered: frozenset[Edge]

    def awake_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.wake))

    def delivered_sorted(self) -> tuple[Edge, ...]:
        return tuple(sorted(self.delivered))


@dataclass(frozen=True, eq=False)
class EventTrace:
    """Seed-deterministic record of wake-ups and link outcomes per iteration.

    Stored as boolean arrays (iterations x nodes for wake-ups, iterations
    x edges for deliveries, columns aligned with the graph's canonical
    edge order); ``event(t)`` materializes one iteration on demand so
    early-stopping runs never pay for the tail of a long trace.
    """

    graph: DirectedGraph
    schedule: BlockSchedule
    seed: int
    wake: np.ndarray
    delivered: np.ndarray

    def __len__(self) -> int:
        return self.wake.shape[0]

    def event(self, t: int) -> IterationEvent:
        edges = self.graph.edges
        awake = frozenset(int(i) for i in np.flatnonzero(self.wake[t]))
        delivered = frozenset(edges[e] for e in np.flatnonzero(self.delivered[t]))
        return IterationEvent(awake, delivered)

    @property
    def events(self) -> tuple[IterationEvent, ...]:
        return tuple(self.event(t) for t in range(len(self)))

    @classmethod
    def from_events(
        cls,
        graph: DirectedGraph,
        schedule: BlockSchedule,
        seed: int,
        events: Sequence[IterationEvent],
    ) -> "EventTrace":
        edge_index = {e: h for h, e in enumerate(graph.edges)}
        wake = np.zeros((len(events), graph.n), dtype=bool)
        delivered = np.zeros((len(events), len(graph.edges)), dtype=bool)
        for t, event in enumerate(events):
            for i in event.wake:
                wake[t, i] = True
            for edge in event.delivered:
                if edge not in edge_index:
                    raise ValueError(f"iteration {t}: delivery on unknown edge {edge}")
                delivered[t, edge_index[edge]] = True
        return cls(graph=graph, schedule=schedule, seed=seed, wake=wake, delivered=delivered)


def generate_trace(
    graph: DirectedGraph,
    schedule: BlockSchedule,
    wake_probability: float,
    failure_probability: float,
    seed: int,
    iterations: int,
    wake_mode: str = "independent",
) -> EventTrace:
    """Draw wake-ups and link failures, then enforce per-block coverage.

    Each iteration wakes every node independently with ``wake_probability``
    (mode "independent") or exactly one node round-robin (mode
    "sequential"), and each outgoing link of an awake node fails with
    ``failure_probability``. Afterwards, any edge that never delivered
    inside one of its complete blocks gets a forced wake-and-success at a
    uniformly chosen iteration of that block, so the block-coverage
    invariant holds by construction. Deterministic for a given seed.
    """
    if graph.non_loop_edges != graph.edges:
        raise ValueError("trace generation expects a base graph without self-loops")
    if not is_strongly_connected(graph):
        raise ValueError("base graph must be strongly connected")
    if not 0.0 < wake_probability <= 1.0:
        raise ValueError("wake_probability must be in (0, 1]")
    if not 0.0 <= failure_probability < 1.0:
        raise ValueError("failure_probability must be in [0, 1)")
    if wake_mode not in WAKE_MODES:
        raise ValueError(f"unknown wake mode {wake_mode!r}")
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    if schedule.total < iterations:
        raise ValueError(
            f"schedule covers {schedule.total} iterations, trace needs {iterations}"
        )
    if schedule.n != graph.n:
        raise ValueError("schedule node count must match the graph")

    rng = np.random.default_rng(seed)
    n = graph.n
    m = len(graph.edges)
    sources = np.array([i for i, _ in graph.edges], dtype=int)

    if wake_mode == "independent":
        wake = rng.random((iterations, n)) < wake_probability
    else:
        wake = np.zeros((iterations, n), dtype=bool)
        if iterations:
            wake[np.arange(iterations), np.arange(iterations) % n] = True
    fail = rng.random((iterations, m)) < failure_probability

    num_blocks = schedule.blocks_within(iterations)
    if num_blocks and m:
        delivered = wake[:, sources] & ~fail
        starts = np.array([schedule.boundary(k) for k in range(num_blocks)], dtype=int)
        lengths = np.array(schedule.lengths[:num_blocks], dtype=int)
        covered = np.logical_or.reduceat(delivered[: schedule.boundary(num_blocks)], starts, axis=0)
        blocks, uncovered_edges = np.nonzero(~covered)
        if len(blocks):
            # one forced wake-and-success per uncovered (block, edge) pair,
            # placed uniformly inside the block; argwhere order is fixed, so
            # the draw sequence is deterministic
            offsets = rng.integers(0, lengths[blocks])
            t = starts[blocks] + offsets
            wake[t, sources[uncovered_edges]] = True
            fail[t, uncovered_edges] = False

    delivered = wake[:, sources] & ~fail
    return EventTrace(graph=graph, schedule=schedule, seed=seed, wake=wake, delivered=delivered)


def single_edge_trace(graph: DirectedGraph, schedule: BlockSchedule, iterations: int) -> EventTrace:
    """Demo trace with exactly one link event per block, cycling the edge list.

    Deliberately starves connectivity: each block realizes a single edge
    at its first iteration, so per-block coverage does NOT hold. Useful
    for showing what happens when communication gaps outgrow the
    admissible bounds.
    """
    if graph.non_loop_edges != graph.edges:
        raise ValueError("trace generation expects a base graph without self-loops")
    if schedule.total < iterations:
        raise ValueError(
            f"schedule covers {schedule.total} iterations, trace needs {iterations}"
        )
    wake = np.zeros((iterations, graph.n), dtype=bool)
    delivered = np.zeros((iterations, len(graph.edges)), dtype=bool)
    for block in range(schedule.blocks_within(iterations)):
        t = schedule.boundary(block)
        e = block % len(graph.edges)
        wake[t, graph.edges[e][0]] = True
        delivered[t, e] = True
    return EventTrace(graph=graph, schedule=schedule, seed=0, wake=wake, delivered=delivered)


def validate_trace(trace: EventTrace) -> None:
    """Raise if the trace violates either event invariant.

    Checks that every delivery comes from an awake source along a real
    edge, and that every complete block covers every edge of the base
    graph at least once.
    """
    sources = np.array([i for i, _ in trace.graph.edges], dtype=int)
    if trace.delivered.shape != (len(trace), len(trace.graph.edges)):
        raise ValueError("delivery matrix shape does not match the graph's edge list")
    orphan = trace.delivered & ~trace.wake[:, sources]
    if orphan.any():
        t, e = np.argwhere(orphan)[0]
        raise ValueError(
            f"iteration {t}: edge {trace.graph.edges[e]} delivered but its source is asleep"
        )
    for block in range(trace.schedule.blocks_within(len(trace))):
        lo, hi = trace.schedule.boundary(block), trace.schedule.boundary(block + 1)
        covered = trace.delivered[lo:hi].any(axis=0)
        if not covered.all():
            missing = [trace.graph.edges[e] for e in np.flatnonzero(~covered)]
            raise ValueError(
                f"block {block} (iterations {lo}..{hi - 1}) never delivered {missing}"
            )


def trace_lines(trace: EventTrace) -> Iterable[str]:
    """Serialize events one line per iteration: iter=<k> wake=<i,..> fail=<i->j,..>.

    Failures are the awake-source edges that did not deliver; successful
    links are implied (awake and not listed as failed).
    """
    for t in range(len(trace)):
        event = trace.event(t)
        wake = ",".join(str(i) for i in event.awake_sorted())
        failed = [
            f"{i}->{j}"
            for i, j in trace.graph.edges
            if i in event.wake and (i, j) not in event.delivered
        ]
        yield f"iter={t} wake={wake} fail={','.join(failed)}"


def events_from_lines(lines: Iterable[str], graph: DirectedGraph) -> tuple[IterationEvent, ...]:
    """Parse the line format produced by :func:`trace_lines`."""
    events = []
    for lineno, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        fields = dict(part.split("=", 1) for part in line.split())
        try:
            t = int(fields["iter"])
            wake_text = fields["wake"]
            fail_text = fields["fail"]
        except KeyError as exc:
            raise ValueError(f"line {lineno}: missing field {exc}") from exc
        if t != len(events):
            raise ValueError(f"line {lineno}: expected iteration {len(events)}, got {t}")
        wake = frozenset(int(i) for i in wake_text.split(",") if i)
        failed = set()
        for part in fail_text.split(","):
            if part:
                a, b = part.split("->")
                failed.add((int(a), int(b)))
        delivered = frozenset(
            (i, j) for i, j in graph.edges if i in wake and (i, j) not in failed
        )
        events.append(IterationEvent(wake, delivered))
    return tuple(events)
