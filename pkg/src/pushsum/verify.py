"""Certify runs against the independent matrix evolution.

For each protocol this drives the state machine and the dense-matrix
oracle over the same event trace and checks them against each other plus
every bound the convergence theory makes testable: stochasticity of every
per-iteration matrix, positivity and entry floors of window products,
weight bounds at window boundaries, conservation, and monotonicity of the
estimate envelope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import graph_of_matrix
from .harness import ScenarioConfig, _realized_graph
from .oracle import spread
from .protocols import (
    SystemState,
    equal_weight_matrix,
    estimate_update_matrix,
    mass_flow_matrix,
    ordinary_step,
    push_sum_step,
    pushsum_matrix,
)

_PHI_TOL = 1e-12
_SUM_TOL = 1e-12
_PROP_TOL = 1e-9
_SLACK = 1 - 1e-12

MAX_VERIFY_NODES = 32


@dataclass
class CheckResult:
    name: str
    passed: bool = True
    detail: str = ""
    failed_at: int | None = None

    def fail(self, iteration: int | None, detail: str) -> None:
        if self.passed:
            self.passed = False
            self.failed_at = iteration
            self.detail = detail


def verify_scenario(cfg: ScenarioConfig, buffer_order=None) -> list[CheckResult]:
    """Run all applicable checks for a scenario; returns one result per check.

    ``buffer_order`` is a test-only fault hook: a permutation of buffer
    indices applied to the oracle's matrices, which must surface as an
    evolution mismatch at the first iteration it matters.
    """
    cfg.validate()
    if cfg.graph.n > MAX_VERIFY_NODES:
        raise ValueError(f"verification is dense-matrix based; max {MAX_VERIFY_NODES} nodes")
    schedule = cfg.build_schedule()
    trace = cfg.build_trace(schedule)
    if cfg.protocol == "robust":
        return _verify_robust(cfg, schedule, trace, buffer_order)
    if cfg.protocol == "pushsum":
        return _verify_pushsum(cfg, schedule, trace)
    return _verify_ordinary(cfg, schedule, trace)


def _complete_windows(schedule, horizon: int) -> int:
    k = 0
    while (k + 1) * schedule.n <= len(schedule.lengths) and schedule.window_boundary(
        k + 1
    ) <= horizon:
        k += 1
    return k


def _verify_robust(cfg, schedule, trace, buffer_order) -> list[CheckResult]:
    n = cfg.graph.n
    m = len(cfg.graph.edges)
    alpha = 1.0 / n
    x0 = np.array(cfg.x0, dtype=float)
    x0_sum = float(x0.sum())
    scale_x = abs(x0_sum) if x0_sum else 1.0

    equivalence = CheckResult("state machine matches matrix evolution (1e-12)")
    col_stochastic = CheckResult("mass-flow matrices column-stochastic (1e-12)")
    entry_floor = CheckResult("positive mass-flow entries at least 1/(max out-degree + 1)")
    window_rows = CheckResult("window products: first n rows positive with entry floor")
    window_floor = CheckResult("window products: positive entries meet the floor")
    weight_bounds = CheckResult("agent weights within theory bounds at boundaries")
    pending_bounds = CheckResult("positive pending weights within theory bounds at boundaries")
    conservation = CheckResult("mass conservation (agents plus buffers)")
    ratio_rows = CheckResult("estimate-update rows sum to one or vanish (1e-12)")
    ratio_floor = CheckResult("positive estimate-update entries meet the window floor")
    ratio_prop = CheckResult("estimate-update matrix reproduces boundary estimates")
    envelope = CheckResult("estimate/ratio envelope nonincreasing across boundaries")

    state = SystemState(cfg.graph, x0)
    phi_x = state.stacked_x()
    phi_y = state.stacked_y()
    perm = None
    if buffer_order is not None:
        perm = np.array(list(range(n)) + [n + int(h) for h in buffer_order])

    max_degree = max(cfg.graph.out_degree(i) for i in range(n))
    flow_floor = 1.0 / (max_degree + 1)

    windows = _complete_windows(schedule, cfg.iterations)
    window_product = np.eye(n + m)
    window_index = 0
    start_snap = _robust_snapshot(state)
    prev_envelope = None

    def at_boundary(t, snap):
        nonlocal prev_envelope
        k = window_index
        lam = schedule.window_length(k)
        y_low = alpha ** lam
        if (snap["y"] < y_low * _SLACK).any() or (snap["y"] > n / _SLACK).any():
            weight_bounds.fail(t, f"window {k}: y = {snap['y']} outside [{y_low!r}, {n}]")
        if k >= 1 and m:
            v_low = alpha ** (lam + schedule.window_length(k - 1))
            positive = snap["v"][snap["v"] > 0]
            if (positive < v_low * _SLACK).any() or (positive > n / _SLACK).any():
                pending_bounds.fail(t, f"window {k}: pending_y outside [{v_low!r}, {n}]")
        active = snap["v"] > 0
        values = np.concatenate([snap["z"], snap["r"][active]])
        env = (values.min(), values.max())
        if prev_envelope is not None:
            scale = max(1.0, abs(env[0]), abs(env[1]))
            converged = (
                env[1] - env[0] <= 1e-8 * scale
                and prev_envelope[1] - prev_envelope[0] <= 1e-8 * scale
            )
            if not converged and env[1] - env[0] > (
                prev_envelope[1] - prev_envelope[0] + 1e-12 * scale
            ):
                envelope.fail(t, f"window {k}: envelope spread grew")
        prev_envelope = env

    at_boundary(0, start_snap)
    for t in range(cfg.iterations):
        event = trace.event(t)
        flow = mass_flow_matrix(cfg.graph, event)
        if perm is not None:
            flow = flow[np.ix_(perm, perm)]
        if not _column_stochastic(flow):
            col_stochastic.fail(t, "a column sum strayed from 1")
        positive = flow[flow > 0]
        if positive.size and positive.min() < flow_floor * _SLACK:
            entry_floor.fail(t, f"entry {positive.min()!r} below {flow_floor!r}")
        phi_x = flow @ phi_x
        phi_y = flow @ phi_y
        window_product = flow @ window_product
        state.step(event)
        if (
            np.abs(phi_x - state.stacked_x()).max() > _PHI_TOL
            or np.abs(phi_y - state.stacked_y()).max() > _PHI_TOL
        ):
            equivalence.fail(t + 1, "stacked mass vectors diverged")
        rx = abs(state.stacked_x().sum() - x0_sum)
        ry = abs(state.stacked_y().sum() - n)
        if rx > cfg.conservation_tol * scale_x or ry > cfg.conservation_tol * n:
            conservation.fail(t + 1, f"residuals ({rx!r}, {ry!r})")
        if window_index < windows and t + 1 == schedule.window_boundary(window_index + 1):
            end_snap = _robust_snapshot(state)
            _check_robust_window(
                window_index,
                schedule,
                alpha,
                window_product,
                start_snap,
                end_snap,
                t + 1,
                window_rows,
                window_floor,
                ratio_rows,
                ratio_floor,
                ratio_prop,
            )
            window_index += 1
            window_product = np.eye(n + m)
            start_snap = end_snap
            at_boundary(t + 1, end_snap)

    return [
        equivalence,
        col_stochastic,
        entry_floor,
        window_rows,
        window_floor,
        weight_bounds,
        pending_bounds,
        conservation,
        ratio_rows,
        ratio_floor,
        ratio_prop,
        envelope,
    ]


def _robust_snapshot(state: SystemState) -> dict:
    return {
        "y": state.y_vector(),
        "v": state.pending_y_vector(),
        "z": state.estimates(),
        "r": state.ratios(),
    }


def _check_robust_window(
    k,
    schedule,
    alpha,
    product,
    start,
    end,
    t,
    window_rows,
    window_floor,
    ratio_rows,
    ratio_floor,
    ratio_prop,
) -> None:
    n = len(start["y"])
    bound = alpha ** (schedule.window_boundary(k + 1) - schedule.window_boundary(k))
    agent_rows = product[:n, :]
    if (agent_rows <= 0).any() or agent_rows.min() < bound * _SLACK:
        window_rows.fail(t, f"window {k}: min agent-row entry {agent_rows.min()!r} vs {bound!r}")
    positive = product[product > 0]
    if positive.size and positive.min() < bound * _SLACK:
        window_floor.fail(t, f"window {k}: positive entry below {bound!r}")

    update = estimate_update_matrix(product, start["y"], end["y"], start["v"], end["v"])
    sums = update.sum(axis=1)
    agent_ok = np.abs(sums[:n] - 1.0).max() <= _SUM_TOL
    buffer_sums = sums[n:]
    empty_end = end["v"] == 0
    buffer_ok = (
        np.abs(buffer_sums[~empty_end] - 1.0).max() <= _SUM_TOL
        if (~empty_end).any()
        else True
    ) and (np.abs(update[n:, :][empty_end]).max() <= _SUM_TOL if empty_end.any() else True)
    if not (agent_ok and buffer_ok):
        ratio_rows.fail(t, f"window {k}: row sums {sums}")
    lam_prev = schedule.window_length(k - 1) if k >= 1 else 0
    floor = alpha ** (
        schedule.window_length(k + 1) + schedule.window_length(k) + lam_prev + 1
    )
    positive = update[update > 0]
    if positive.size and positive.min() < floor * _SLACK:
        ratio_floor.fail(t, f"window {k}: entry {positive.min()!r} below {floor!r}")
    predicted = update @ np.concatenate([start["z"], start["r"]])
    actual = np.concatenate([end["z"], end["r"]])
    active = np.concatenate([np.ones(n, dtype=bool), end["v"] > 0])
    if np.abs(predicted[active] - actual[active]).max() > _PROP_TOL:
        ratio_prop.fail(t, f"window {k}: propagated estimates diverged")


def _verify_pushsum(cfg, schedule, trace) -> list[CheckResult]:
    n = cfg.graph.n
    alpha = 1.0 / n
    base = cfg.graph.without_self_loops()
    x0 = np.array(cfg.x0, dtype=float)
    x0_sum = float(x0.sum())
    scale_x = abs(x0_sum) if x0_sum else 1.0

    equivalence = CheckResult("per-node updates match matrix evolution (1e-12)")
    col_stochastic = CheckResult("splitting matrices column-stochastic (1e-12)")
    entry_floor = CheckResult("positive splitting entries at least 1/n")
    window_pos = CheckResult("window products strictly positive with entry floor")
    weight_bounds = CheckResult("weights within theory bounds at boundaries")
    preservation = CheckResult("mass sums preserved")
    update_rows = CheckResult("estimate-update matrices row-stochastic (1e-12)")
    update_floor = CheckResult("window estimate-update entries meet the floor")
    envelope = CheckResult("estimate range nested across boundaries")

    x, y = x0.copy(), np.ones(n)
    ox, oy = x0.copy(), np.ones(n)
    windows = _complete_windows(schedule, cfg.iterations)
    window_product = np.eye(n)
    window_index = 0
    y_start = y.copy()
    z_start = x / y
    prev_range = None

    def at_boundary(t, z, yy):
        nonlocal prev_range
        k = window_index
        if k >= 1:
            y_low = alpha ** (schedule.window_length(k) - 1)
            if (yy < y_low * _SLACK).any() or (yy > n / _SLACK).any():
                weight_bounds.fail(t, f"window {k}: y outside [{y_low!r}, {n}]")
        rng = (z.min(), z.max())
        scale = max(1.0, abs(rng[0]), abs(rng[1]))
        converged = (
            rng[1] - rng[0] <= 1e-8 * scale
            and prev_range is not None
            and prev_range[1] - prev_range[0] <= 1e-8 * scale
        )
        if prev_range is not None and not converged and (
            rng[0] < prev_range[0] - 1e-12 * scale or rng[1] > prev_range[1] + 1e-12 * scale
        ):
            envelope.fail(t, f"window {k}: estimates left the previous range")
        prev_range = rng

    at_boundary(0, x / y, y)
    for t in range(cfg.iterations):
        realized = _realized_graph(base, trace.event(t))
        w = pushsum_matrix(realized)
        if not _column_stochastic(w):
            col_stochastic.fail(t, "a column sum strayed from 1")
        positive = w[w > 0]
        if positive.min() < alpha * _SLACK:
            entry_floor.fail(t, f"entry {positive.min()!r} below 1/n")
        ox, oy = w @ ox, w @ oy
        x, y, _ = push_sum_step(realized, x, y)
        if np.abs(x - ox).max() > _PHI_TOL or np.abs(y - oy).max() > _PHI_TOL:
            equivalence.fail(t + 1, "mass vectors diverged")
        if (
            abs(x.sum() - x0_sum) > cfg.conservation_tol * scale_x
            or abs(y.sum() - n) > cfg.conservation_tol * n
        ):
            preservation.fail(t + 1, "mass sum drifted")
        window_product = w @ window_product
        if window_index < windows and t + 1 == schedule.window_boundary(window_index + 1):
            k = window_index
            bound = alpha ** schedule.window_length(k + 1)
            if (window_product <= 0).any() or window_product.min() < bound * _SLACK:
                window_pos.fail(t + 1, f"window {k}: min entry {window_product.min()!r}")
            update = estimate_update_matrix(
                window_product, y_start, y, np.array([]), np.array([])
            )
            if np.abs(update.sum(axis=1) - 1.0).max() > _SUM_TOL:
                update_rows.fail(t + 1, f"window {k}: row sums strayed from 1")
            # guaranteed floor: 1/n from the end weights, the window floor,
            # and the start-weight bound (exactly 1 before the first window)
            start_exponent = schedule.window_length(k) - 1 if k >= 1 else 0
            floor = alpha ** (1 + schedule.window_length(k + 1) + start_exponent)
            if update.min() < floor * _SLACK:
                update_floor.fail(t + 1, f"window {k}: entry below {floor!r}")
            window_index += 1
            window_product = np.eye(n)
            y_start = y.copy()
            z_start = x / y
            at_boundary(t + 1, z_start, y)

    return [
        equivalence,
        col_stochastic,
        entry_floor,
        window_pos,
        weight_bounds,
        preservation,
        update_rows,
        update_floor,
        envelope,
    ]


def _verify_ordinary(cfg, schedule, trace) -> list[CheckResult]:
    n = cfg.graph.n
    alpha = 1.0 / n
    base = cfg.graph.without_self_loops()
    x0 = np.array(cfg.x0, dtype=float)

    equivalence = CheckResult("stepwise updates match matrix products (1e-12)")
    row_stochastic = CheckResult("update matrices row-stochastic (1e-12)")
    graph_match = CheckResult("thresholded matrix graph equals the realized graph")
    window_pos = CheckResult("window products strictly positive with entry floor")
    contraction = CheckResult("window spread contraction holds")
    value_range = CheckResult("values stay inside the initial range")

    x = x0.copy()
    cumulative = np.eye(n)
    windows = _complete_windows(schedule, cfg.iterations)
    window_product = np.eye(n)
    window_index = 0
    spread_start = spread(x)
    lo0, hi0 = x0.min(), x0.max()

    for t in range(cfg.iterations):
        realized = _realized_graph(base, trace.event(t))
        a = equal_weight_matrix(realized)
        if not np.array_equal(
            np.array(graph_of_matrix(a, alpha).edges, dtype=int),
            np.array(realized.edges, dtype=int),
        ):
            graph_match.fail(t, "edge sets differ")
        try:
            x = ordinary_step(a, x)
        except ValueError:
            row_stochastic.fail(t, "matrix rejected as non-stochastic")
            x = a @ x
        cumulative = a @ cumulative
        if np.abs(x - cumulative @ x0).max() > _PHI_TOL:
            equivalence.fail(t + 1, "value vectors diverged")
        if (x < lo0 - 1e-12).any() or (x > hi0 + 1e-12).any():
            value_range.fail(t + 1, "a value left the initial interval")
        window_product = a @ window_product
        if window_index < windows and t + 1 == schedule.window_boundary(window_index + 1):
            k = window_index
            bound = alpha ** schedule.window_length(k + 1)
            if (window_product <= 0).any() or window_product.min() < bound * _SLACK:
                window_pos.fail(t + 1, f"window {k}: min entry {window_product.min()!r}")
            allowed = (1.0 - n * bound) * spread_start
            if spread(x) > allowed + 1e-12:
                contraction.fail(t + 1, f"window {k}: spread {spread(x)!r} > {allowed!r}")
            window_index += 1
            window_product = np.eye(n)
            spread_start = spread(x)

    return [
        equivalence,
        row_stochastic,
        graph_match,
        window_pos,
        contraction,
        value_range,
    ]


def _column_stochastic(matrix: np.ndarray) -> bool:
    return bool(
        (matrix >= -_SUM_TOL).all()
        and np.abs(matrix.sum(axis=0) - 1.0).max() <= _SUM_TOL
    )
