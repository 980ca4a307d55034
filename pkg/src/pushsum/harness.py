"""End-to-end scenario execution with invariant auditing.

A scenario bundles a protocol, a graph, initial values, a block schedule
source and an event-trace source. Running it produces a metric series
(sampled per iteration at desk scales, per block boundary beyond),
window-boundary snapshots used by the theory-level checks, and a
convergence verdict. Audits abort the run on the first violated
invariant: post-violation data is meaningless for verification.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graphs import DirectedGraph, is_strongly_connected
from .oracle import spread
from .protocols import SystemState, equal_weight_matrix, ordinary_step, push_sum_step
from .schedules import (
    REGIMES,
    WAKE_MODES,
    BlockSchedule,
    EventTrace,
    generate_trace,
    schedule_covering,
    single_edge_trace,
)

PROTOCOLS = ("ordinary", "pushsum", "robust")
AUDIT_LEVELS = ("none", "boundaries", "every_iteration")
TRACE_MODES = ("covering", "single_edge_per_block")

# Multiplicative slack for theory bounds, additive for envelope monotonicity.
_BOUND_SLACK = 1e-12


class ConfigError(ValueError):
    """A scenario failed validation; the message names the offending field."""


class AuditError(RuntimeError):
    """An invariant failed during a run."""

    def __init__(self, iteration: int, invariant: str, detail: str = ""):
        self.iteration = iteration
        self.invariant = invariant
        tail = f": {detail}" if detail else ""
        super().__init__(f"iteration {iteration}: {invariant} violated{tail}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs; hand-editable via the YAML scenario files."""

    protocol: str
    graph: DirectedGraph
    x0: tuple[float, ...]
    regime: str | None = None
    alpha: float | None = None
    K: int = 1
    T: int = 0
    block_lengths: tuple[int, ...] | None = None
    repeat_blocks: bool = False
    wake_probability: float = 1.0
    failure_probability: float = 0.0
    seed: int = 0
    wake_mode: str = "independent"
    trace_mode: str = "covering"
    iterations: int = 1
    convergence_tol: float = 1e-8
    conservation_tol: float = 1e-9
    audit_level: str = "boundaries"
    stop_when_converged: bool = True
    convergence_window: int = 3

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if len(self.x0) != self.graph.n:
            raise ConfigError(
                f"x0 has length {len(self.x0)} but the graph has {self.graph.n} nodes"
            )
        if self.protocol == "robust":
            if self.graph.non_loop_edges != self.graph.edges:
                raise ConfigError("graph: robust runs need a base graph without self-loops")
            if not is_strongly_connected(self.graph):
                raise ConfigError("graph: robust runs need a strongly connected base graph")
        else:
            for i in range(self.graph.n):
                if not self.graph.has_edge(i, i):
                    raise ConfigError(
                        f"graph: {self.protocol} runs need a self-loop at every node "
                        f"(node {i} lacks one)"
                    )
        if self.block_lengths is None:
            if self.repeat_blocks:
                raise ConfigError("schedule.repeat_blocks needs explicit block_lengths")
            if self.regime is None:
                raise ConfigError("schedule: either regime or block_lengths is required")
            if self.regime not in REGIMES:
                raise ConfigError(f"schedule.regime must be one of {REGIMES}")
            if self.regime == "ordinary" and not (
                self.alpha is not None and 0.0 < self.alpha < 1.0
            ):
                raise ConfigError("schedule.alpha must be in (0, 1) for the ordinary regime")
        else:
            if not self.block_lengths:
                raise ConfigError("schedule.block_lengths must not be empty")
            if any(b < 1 for b in self.block_lengths):
                raise ConfigError("schedule.block_lengths must all be >= 1")
            if not self.repeat_blocks and sum(self.block_lengths) < self.iterations:
                raise ConfigError(
                    f"schedule.block_lengths cover {sum(self.block_lengths)} iterations, "
                    f"fewer than the {self.iterations} requested"
                )
        if not 0.0 < self.wake_probability <= 1.0:
            raise ConfigError("schedule.wake_probability must be in (0, 1]")
        if not 0.0 <= self.failure_probability < 1.0:
            raise ConfigError("schedule.failure_probability must be in [0, 1)")
        if self.wake_mode not in WAKE_MODES:
            raise ConfigError(f"schedule.wake_mode must be one of {WAKE_MODES}")
        if self.trace_mode not in TRACE_MODES:
            raise ConfigError(f"schedule.trace_mode must be one of {TRACE_MODES}")
        if self.K < 1:
            raise ConfigError("schedule.K must be >= 1")
        if self.T < 0:
            raise ConfigError("schedule.T must be >= 0")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.convergence_tol <= 0 or self.conservation_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.audit_level not in AUDIT_LEVELS:
            raise ConfigError(f"audit_level must be one of {AUDIT_LEVELS}")
        if self.convergence_window < 1:
            raise ConfigError("convergence_window must be >= 1")

    def build_schedule(self) -> BlockSchedule:
        if self.block_lengths is not None:
            lengths = self.block_lengths
            if self.repeat_blocks:
                copies = max(1, -(-self.iterations // sum(lengths)))
                lengths = lengths * copies
            return BlockSchedule(lengths, self.graph.n)
        return schedule_covering(
            self.graph.n, self.regime, self.T, self.iterations, self.alpha
        )

    def build_trace(self, schedule: BlockSchedule | None = None) -> EventTrace:
        schedule = schedule or self.build_schedule()
        base = self.graph if self.protocol == "robust" else self.graph.without_self_loops()
        if self.trace_mode == "single_edge_per_block":
            return single_edge_trace(base, schedule, self.iterations)
        return generate_trace(
            base,
            schedule,
            self.wake_probability,
            self.failure_probability,
            self.seed,
            self.iterations,
            self.wake_mode,
        )


@dataclass
class MetricSeries:
    """Per-sample run metrics; entries not applicable to a protocol are NaN."""

    iteration: np.ndarray
    spread_z: np.ndarray
    res_x: np.ndarray
    res_y: np.ndarray
    min_y: np.ndarray
    max_u: np.ndarray
    max_v: np.ndarray

    CSV_HEADER = "iter,spread_z,res_x,res_y,min_y,max_u,max_v"

    def __len__(self) -> int:
        return len(self.iteration)

    def csv_rows(self):
        for k in range(len(self.iteration)):
            values = (
                self.spread_z[k], self.res_x[k], self.res_y[k],
                self.min_y[k], self.max_u[k], self.max_v[k],
            )
            yield f"{int(self.iteration[k])}," + ",".join(repr(float(v)) for v in values)


@dataclass
class BoundarySample:
    """State snapshot at a window boundary, where the contraction theory bites."""

    window: int
    iteration: int
    z: np.ndarray
    y: np.ndarray
    pending_y: np.ndarray
    ratios: np.ndarray
    envelope_max: float
    envelope_min: float

    @property
    def envelope_spread(self) -> float:
        return self.envelope_max - self.envelope_min


@dataclass
class RunResult:
    converged_at: int | None
    final_z: np.ndarray
    series: MetricSeries
    boundaries: list[BoundarySample]
    audit_failures: list[str]
    schedule: BlockSchedule
    iterations_run: int


def detect_convergence(spreads, tol: float, window: int, iterations=None) -> int | None:
    """First sample s.t. this and the next window-1 recorded spreads are all <= tol.

    Returns the iteration label of that sample (its index when no labels
    are given), or None when no such streak exists.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    spreads = list(spreads)
    labels = list(iterations) if iterations is not None else list(range(len(spreads)))
    streak = 0
    for idx, value in enumerate(spreads):
        streak = streak + 1 if value <= tol else 0
        if streak >= window:
            return labels[idx - window + 1]
    return None


def audit_mass_conservation(state: SystemState, x0_sum: float, n: int) -> tuple[float, float]:
    """Absolute drift of total x-mass (against x0_sum) and y-mass (against n),
    counting both agent and pending masses."""
    rx = abs(state.x_vector().sum() + state.pending_x_vector().sum() - x0_sum)
    ry = abs(state.y_vector().sum() + state.pending_y_vector().sum() - n)
    return rx, ry


class _Recorder:
    """Shared sampling, convergence and boundary bookkeeping for all protocols."""

    def __init__(self, cfg: ScenarioConfig, schedule: BlockSchedule):
        self.cfg = cfg
        self.schedule = schedule
        self.sample_every = cfg.graph.n <= 8 and cfg.iterations <= 100_000
        self._block_ptr = 0
        self.rows: list[tuple] = []
        self._streak = 0
        self.converged = False
        self.boundaries: list[BoundarySample] = []

    def should_sample(self, t: int) -> bool:
        if self.sample_every or t == 0 or t == self.cfg.iterations:
            return True
        while (
            self._block_ptr < len(self.schedule.lengths)
            and self.schedule.boundary(self._block_ptr + 1) < t
        ):
            self._block_ptr += 1
        return (
            self._block_ptr < len(self.schedule.lengths)
            and self.schedule.boundary(self._block_ptr + 1) == t
        )

    def record(self, t, spread_z, res_x, res_y, min_y, max_u, max_v) -> None:
        self.rows.append((t, spread_z, res_x, res_y, min_y, max_u, max_v))
        self._streak = self._streak + 1 if spread_z <= self.cfg.convergence_tol else 0
        if self._streak >= self.cfg.convergence_window:
            self.converged = True

    def series(self) -> MetricSeries:
        cols = list(zip(*self.rows)) if self.rows else [[]] * 7
        return MetricSeries(
            iteration=np.array(cols[0], dtype=int),
            spread_z=np.array(cols[1], dtype=float),
            res_x=np.array(cols[2], dtype=float),
            res_y=np.array(cols[3], dtype=float),
            min_y=np.array(cols[4], dtype=float),
            max_u=np.array(cols[5], dtype=float),
            max_v=np.array(cols[6], dtype=float),
        )

    def result(self, final_z: np.ndarray, iterations_run: int) -> RunResult:
        series = self.series()
        converged_at = None
        if len(series):
            converged_at = detect_convergence(
                series.spread_z,
                self.cfg.convergence_tol,
                self.cfg.convergence_window,
                iterations=series.iteration,
            )
        return RunResult(
            converged_at=converged_at,
            final_z=final_z,
            series=series,
            boundaries=self.boundaries,
            audit_failures=[],
            schedule=self.schedule,
            iterations_run=iterations_run,
        )


def _boundary_windows(schedule: BlockSchedule, horizon: int) -> dict[int, int]:
    """Map iteration -> window index for every window boundary within horizon."""
    out = {}
    for k in range(schedule.num_windows + 1):
        t = schedule.window_boundary(k)
        if t <= horizon:
            out[t] = k
    return out


def _audit_envelope(rec: _Recorder, sample: BoundarySample) -> None:
    if rec.boundaries:
        prev = rec.boundaries[-1]
        scale = max(1.0, abs(sample.envelope_max), abs(sample.envelope_min))
        # once both spreads sit at the converged noise floor, monotonicity
        # is numerically meaningless: buffer ratios divide cancellation
        # noise of large running totals by near-zero pending weights, which
        # jitters the envelope at the 1e-11 level without any real growth
        if (
            sample.envelope_spread <= 1e-8 * scale
            and prev.envelope_spread <= 1e-8 * scale
        ):
            return
        slack = _BOUND_SLACK * scale
        if sample.envelope_spread > prev.envelope_spread + slack:
            raise AuditError(
                sample.iteration,
                "envelope monotonicity",
                f"window {sample.window}: spread grew from "
                f"{prev.envelope_spread!r} to {sample.envelope_spread!r}",
            )
        if sample.envelope_max > prev.envelope_max + slack or (
            sample.envelope_min < prev.envelope_min - slack
        ):
            raise AuditError(
                sample.iteration,
                "envelope nesting",
                f"window {sample.window} left the previous boundary's range",
            )


def run_scenario(cfg: ScenarioConfig, trace: EventTrace | None = None, _tamper=None) -> RunResult:
    """Execute one scenario end to end.

    ``trace`` overrides the generated event trace (it must cover the
    configured iterations). ``_tamper`` is a test-only hook called as
    ``_tamper(state, t)`` after each iteration, used to inject faults that
    the audits must catch. Deterministic for a fixed config.
    """
    cfg.validate()
    schedule = cfg.build_schedule()
    if cfg.iterations == 0:
        empty = np.array([])
        series = MetricSeries(*(np.array([], dtype=int),), *(empty.copy() for _ in range(6)))
        return RunResult(
            converged_at=None,
            final_z=np.array(cfg.x0, dtype=float),
            series=series,
            boundaries=[],
            audit_failures=[],
            schedule=schedule,
            iterations_run=0,
        )
    if trace is None:
        trace = cfg.build_trace(schedule)
    elif len(trace) < cfg.iterations:
        raise ConfigError(f"supplied trace has {len(trace)} events, need {cfg.iterations}")
    if cfg.protocol == "robust":
        return _run_robust(cfg, schedule, trace, _tamper)
    if cfg.protocol == "pushsum":
        return _run_pushsum(cfg, schedule, trace, _tamper)
    return _run_ordinary(cfg, schedule, trace, _tamper)


def _realized_graph(base: DirectedGraph, event) -> DirectedGraph:
    loops = tuple((i, i) for i in range(base.n))
    return DirectedGraph(base.n, loops + tuple(event.delivered), "required")


def _run_robust(cfg, schedule, trace, tamper) -> RunResult:
    x0 = np.array(cfg.x0, dtype=float)
    x0_sum = float(x0.sum())
    scale_x = abs(x0_sum) if x0_sum else 1.0
    n = cfg.graph.n
    state = SystemState(cfg.graph, x0)
    rec = _Recorder(cfg, schedule)
    boundary_at = _boundary_windows(schedule, cfg.iterations)
    audit_bounds = cfg.audit_level in ("boundaries", "every_iteration")
    audit_each = cfg.audit_level == "every_iteration"

    def metrics(t: int) -> None:
        z = state.estimates()
        rx, ry = audit_mass_conservation(state, x0_sum, n)
        u = state.pending_x_vector()
        v = state.pending_y_vector()
        if audit_each:
            _audit_robust_iteration(state, t, rx, ry, scale_x, n, cfg.conservation_tol, v, u)
        if rec.should_sample(t):
            rec.record(t, spread(z), rx, ry, float(state.y_vector().min()),
                       float(u.max()) if len(u) else 0.0, float(v.max()) if len(v) else 0.0)

    def boundary(t: int) -> None:
        k = boundary_at[t]
        z = state.estimates()
        y = state.y_vector()
        v = state.pending_y_vector()
        r = state.ratios()
        active = v > 0
        env_values = np.concatenate([z, r[active]])
        sample = BoundarySample(
            window=k, iteration=t, z=z, y=y, pending_y=v, ratios=r,
            envelope_max=float(env_values.max()), envelope_min=float(env_values.min()),
        )
        if audit_bounds:
            _audit_robust_boundary(sample, schedule, n, t)
            _audit_envelope(rec, sample)
        rec.boundaries.append(sample)

    metrics(0)
    if 0 in boundary_at:
        boundary(0)
    t = 0
    for t in range(1, cfg.iterations + 1):
        state.step(trace.event(t - 1))
        if tamper is not None:
            tamper(state, t)
        metrics(t)
        if t in boundary_at:
            boundary(t)
        if rec.converged and cfg.stop_when_converged:
            break
    return rec.result(state.estimates(), min(t, cfg.iterations))


def _audit_robust_iteration(state, t, rx, ry, scale_x, n, tol, v, u) -> None:
    if rx > tol * scale_x:
        raise AuditError(t, "x-mass conservation", f"residual {rx!r}")
    if ry > tol * n:
        raise AuditError(t, "y-mass conservation", f"residual {ry!r}")
    if (state.y_vector() <= 0).any():
        raise AuditError(t, "positive agent weight", "some y <= 0")
    if (v < 0).any():
        raise AuditError(t, "nonnegative pending weight", "some pending_y < 0")
    empty = v == 0
    if (u[empty] != 0).any():
        raise AuditError(t, "empty buffer carries no value", "pending_x != 0 where pending_y == 0")


def _audit_robust_boundary(sample: BoundarySample, schedule, n, t) -> None:
    alpha = 1.0 / n
    k = sample.window
    lam = schedule.window_length(k)
    y_low = alpha ** lam
    if (sample.y < y_low * (1 - _BOUND_SLACK)).any() or (sample.y > n * (1 + _BOUND_SLACK)).any():
        raise AuditError(t, "agent weight bounds", f"window {k}: y outside [{y_low!r}, {n}]")
    if k >= 1 and len(sample.pending_y):
        v_low = alpha ** (lam + schedule.window_length(k - 1))
        positive = sample.pending_y[sample.pending_y > 0]
        if (positive < v_low * (1 - _BOUND_SLACK)).any() or (positive > n * (1 + _BOUND_SLACK)).any():
            raise AuditError(
                t, "pending weight bounds", f"window {k}: pending_y outside [{v_low!r}, {n}]"
            )


def _run_pushsum(cfg, schedule, trace, tamper) -> RunResult:
    x = np.array(cfg.x0, dtype=float)
    y = np.ones(cfg.graph.n)
    x0_sum = float(x.sum())
    scale_x = abs(x0_sum) if x0_sum else 1.0
    n = cfg.graph.n
    base = cfg.graph.without_self_loops()
    rec = _Recorder(cfg, schedule)
    boundary_at = _boundary_windows(schedule, cfg.iterations)
    audit_bounds = cfg.audit_level in ("boundaries", "every_iteration")
    audit_each = cfg.audit_level == "every_iteration"
    nan = float("nan")

    def metrics(t: int) -> None:
        rx = abs(x.sum() - x0_sum)
        ry = abs(y.sum() - n)
        if audit_each:
            if rx > cfg.conservation_tol * scale_x:
                raise AuditError(t, "x-mass conservation", f"residual {rx!r}")
            if ry > cfg.conservation_tol * n:
                raise AuditError(t, "y-mass conservation", f"residual {ry!r}")
        if rec.should_sample(t):
            rec.record(t, spread(x / y), rx, ry, float(y.min()), nan, nan)

    def boundary(t: int) -> None:
        k = boundary_at[t]
        z = x / y
        sample = BoundarySample(
            window=k, iteration=t, z=z, y=y.copy(),
            pending_y=np.array([]), ratios=np.array([]),
            envelope_max=float(z.max()), envelope_min=float(z.min()),
        )
        if audit_bounds:
            if k >= 1:
                lam = schedule.window_length(k)
                y_low = (1.0 / n) ** (lam - 1)
                if (y < y_low * (1 - _BOUND_SLACK)).any() or (y > n * (1 + _BOUND_SLACK)).any():
                    raise AuditError(
                        t, "weight bounds", f"window {k}: y outside [{y_low!r}, {n}]"
                    )
            _audit_envelope(rec, sample)
        rec.boundaries.append(sample)

    metrics(0)
    if 0 in boundary_at:
        boundary(0)
    t = 0
    for t in range(1, cfg.iterations + 1):
        realized = _realized_graph(base, trace.event(t - 1))
        x, y, _ = push_sum_step(realized, x, y)
        if tamper is not None:
            tamper({"x": x, "y": y}, t)
        metrics(t)
        if t in boundary_at:
            boundary(t)
        if rec.converged and cfg.stop_when_converged:
            break
    return rec.result(x / y, min(t, cfg.iterations))


def _run_ordinary(cfg, schedule, trace, tamper) -> RunResult:
    x = np.array(cfg.x0, dtype=float)
    x0_sum = float(x.sum())
    lo0, hi0 = float(x.min()), float(x.max())
    base = cfg.graph.without_self_loops()
    rec = _Recorder(cfg, schedule)
    boundary_at = _boundary_windows(schedule, cfg.iterations)
    audit_bounds = cfg.audit_level in ("boundaries", "every_iteration")
    audit_each = cfg.audit_level == "every_iteration"
    nan = float("nan")

    def metrics(t: int) -> None:
        if audit_each and (
            (x < lo0 - _BOUND_SLACK).any() or (x > hi0 + _BOUND_SLACK).any()
        ):
            raise AuditError(t, "value range", "x left the initial [min, max] interval")
        if rec.should_sample(t):
            rec.record(t, spread(x), abs(x.sum() - x0_sum), nan, nan, nan, nan)

    def boundary(t: int) -> None:
        sample = BoundarySample(
            window=boundary_at[t], iteration=t, z=x.copy(), y=np.array([]),
            pending_y=np.array([]), ratios=np.array([]),
            envelope_max=float(x.max()), envelope_min=float(x.min()),
        )
        if audit_bounds:
            _audit_envelope(rec, sample)
        rec.boundaries.append(sample)

    metrics(0)
    if 0 in boundary_at:
        boundary(0)
    t = 0
    for t in range(1, cfg.iterations + 1):
        realized = _realized_graph(base, trace.event(t - 1))
        x = ordinary_step(equal_weight_matrix(realized), x)
        if tamper is not None:
            tamper({"x": x}, t)
        metrics(t)
        if t in boundary_at:
            boundary(t)
        if rec.converged and cfg.stop_when_converged:
            break
    return rec.result(x.copy(), min(t, cfg.iterations))


def divergence_demo(cfg: ScenarioConfig) -> RunResult:
    """Run an ordinary-consensus scenario whose communication gaps outgrow
    every admissible bound, to show the resulting stall.

    Requires explicit block lengths that at least double from one block to
    the next; the event trace is forced to one link event per block. No
    theoretical claim attaches to the output: it illustrates how little
    mixing survives when blocks grow geometrically.
    """
    if cfg.protocol != "ordinary":
        raise ConfigError("the divergence demo runs the ordinary protocol")
    if cfg.block_lengths is None or len(cfg.block_lengths) < 2:
        raise ConfigError("the divergence demo needs explicit growing block_lengths")
    for a, b in zip(cfg.block_lengths, cfg.block_lengths[1:]):
        if b < 2 * a:
            raise ConfigError("demo block_lengths must at least double each block")
    demo_cfg = replace(cfg, trace_mode="single_edge_per_block", audit_level="none")
    return run_scenario(demo_cfg)


def write_metrics_csv(series: MetricSeries, path) -> None:
    with open(path, "w") as fh:
        fh.write(MetricSeries.CSV_HEADER + "\n")
        for row in series.csv_rows():
            fh.write(row + "\n")


def summary_text(cfg: ScenarioConfig, result: RunResult) -> str:
    """Single structured-text record describing a finished run."""
    final_spread = spread(result.final_z) if len(result.final_z) else float("nan")
    lines = [
        f"protocol: {cfg.protocol}",
        f"nodes: {cfg.graph.n}",
        f"edges: {len(cfg.graph.edges)}",
        f"seed: {cfg.seed}",
        f"iterations_run: {result.iterations_run}",
        f"converged_at: {'' if result.converged_at is None else result.converged_at}",
        f"final_spread: {final_spread!r}",
        f"final_z: [{', '.join(repr(float(v)) for v in result.final_z)}]",
        f"audit_failures: [{', '.join(result.audit_failures)}]",
    ]
    return "\n".join(lines) + "\n"
