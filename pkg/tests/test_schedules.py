import math

import numpy as np
import pytest

from pushsum.graphs import DirectedGraph, ring_with_chord
from pushsum.schedules import (
    BlockSchedule,
    EventTrace,
    check_window_bound,
    events_from_lines,
    generate_trace,
    logarithmic_block_lengths,
    schedule_covering,
    single_edge_trace,
    trace_lines,
    validate_trace,
    window_bound,
)


class TestBlockSchedule:
    def test_boundaries(self):
        s = BlockSchedule((1, 2, 3), n=2)
        assert s.boundary(0) == 0
        assert s.boundary(2) == 3
        assert BlockSchedule((5, 5), n=2).boundary(2) == 10

    def test_boundary_errors(self):
        s = BlockSchedule((1, 2), n=2)
        with pytest.raises(ValueError, match="nonnegative"):
            s.boundary(-1)
        with pytest.raises(ValueError, match="only 2 blocks"):
            s.boundary(3)

    def test_window_lengths(self):
        assert BlockSchedule((1, 1, 1, 1), n=2).window_length(1) == 2
        assert BlockSchedule((1, 2, 3, 4), n=2).window_length(2) == 7
        assert BlockSchedule((1, 2, 3, 4), n=2).window_length(0) == 0

    def test_window_length_needs_enough_blocks(self):
        with pytest.raises(ValueError, match="too short"):
            BlockSchedule((1, 1, 1), n=2).window_length(2)

    def test_block_lengths_positive(self):
        with pytest.raises(ValueError, match=">= 1"):
            BlockSchedule((1, 0), n=2)

    def test_window_length_matches_boundary_difference(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            n = int(rng.integers(2, 6))
            lengths = tuple(int(b) for b in rng.integers(1, 7, size=n * int(rng.integers(1, 5))))
            s = BlockSchedule(lengths, n)
            for k in range(1, s.num_windows + 1):
                assert s.window_length(k) == s.boundary(k * n) - s.boundary((k - 1) * n)


class TestWindowBound:
    def test_ordinary_needs_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            window_bound("ordinary", 1, 0, 3)
        assert window_bound("ordinary", 9, T=1, n=3, alpha=0.5) == pytest.approx(
            -math.log(10) / math.log(0.5)
        )

    def test_robust_is_slowest(self):
        k, T, n = 50, 100, 4
        assert window_bound("robust", k, T, n) < window_bound("pushsum", k, T, n)


class TestCheckWindowBound:
    def test_constant_blocks_pass_with_large_shift(self):
        # all-ones blocks give constant window length n; the bound accepts
        # that from k = 1 once ln(1+T) >= n * 6 ln n
        n = 3
        T = math.ceil(n ** (6 * n))
        s = BlockSchedule((1,) * 30, n)
        assert check_window_bound(s, "robust", start=1, T=T, horizon=s.num_windows)

    def test_linear_growth_fails(self):
        n = 2
        s = BlockSchedule(tuple(range(1, 41)), n)
        assert not check_window_bound(s, "pushsum", start=1, T=10**6, horizon=s.num_windows)

    def test_generated_schedule_passes_with_same_shift(self):
        n = 2
        T = math.ceil(n ** (2 * n)) + 50
        s = logarithmic_block_lengths(n, "pushsum", T, count=40)
        assert check_window_bound(s, "pushsum", start=1, T=T, horizon=s.num_windows)


class TestLogarithmicBlockLengths:
    def test_count_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            logarithmic_block_lengths(2, "robust", 0, 0)

    def test_zero_shift_starts_all_ones(self):
        s = logarithmic_block_lengths(2, "robust", T=0, count=20)
        assert s.lengths == (1,) * 20

    def test_large_shift_grows_early_blocks(self):
        # ln(1 + 10**6) / (2 ln 3) / 3 ~ 2.09, so blocks start at 2
        grown = logarithmic_block_lengths(3, "pushsum", T=10**6, count=12)
        flat = logarithmic_block_lengths(3, "pushsum", T=0, count=12)
        assert grown.lengths[0] == 2
        assert flat.lengths[0] == 1
        assert grown.lengths[0] > flat.lengths[0]

    def test_nondecreasing(self):
        s = logarithmic_block_lengths(2, "pushsum", T=10**9, count=200)
        assert all(a <= b for a, b in zip(s.lengths, s.lengths[1:]))

    def test_composition_with_bound_check(self):
        # whenever the bound admits any schedule at window 1 (window
        # lengths can never drop below n), the generated schedule passes
        # the check with the same shift from k = 1
        rng = np.random.default_rng(17)
        regimes = ("ordinary", "pushsum", "robust")
        for trial in range(100):
            n = int(rng.integers(2, 5))
            regime = regimes[trial % 3]
            alpha = 1.0 / n if regime == "ordinary" else None
            if regime == "ordinary":
                threshold_T = math.ceil((1.0 / alpha) ** n)
            elif regime == "pushsum":
                threshold_T = math.ceil(n ** (2 * n))
            else:
                threshold_T = math.ceil(n ** (6 * n))
            T = threshold_T + int(rng.integers(0, 10**4))
            count = n * int(rng.integers(1, 8))
            s = logarithmic_block_lengths(n, regime, T, count, alpha)
            assert check_window_bound(s, regime, 1, T, s.num_windows, alpha)

    def test_schedule_covering_reaches_horizon(self):
        for horizon in (0, 1, 7, 1000):
            s = schedule_covering(3, "robust", 0, horizon)
            assert s.total >= horizon


class TestGenerateTrace:
    def graph(self):
        return ring_with_chord(4)

    def test_reliable_synchronous_limit(self):
        g = self.graph()
        s = BlockSchedule((1,) * 10, g.n)
        trace = generate_trace(g, s, 1.0, 0.0, seed=0, iterations=10)
        assert trace.wake.all()
        assert trace.delivered.all()
        validate_trace(trace)

    def test_heavy_failures_still_cover_blocks(self):
        g = self.graph()
        s = BlockSchedule((5,) * 20, g.n)
        trace = generate_trace(g, s, 0.5, 0.99, seed=1, iterations=100)
        validate_trace(trace)

    def test_deterministic_for_fixed_seed(self):
        g = self.graph()
        s = BlockSchedule((3,) * 30, g.n)
        a = generate_trace(g, s, 0.4, 0.6, seed=42, iterations=90)
        b = generate_trace(g, s, 0.4, 0.6, seed=42, iterations=90)
        np.testing.assert_array_equal(a.wake, b.wake)
        np.testing.assert_array_equal(a.delivered, b.delivered)
        c = generate_trace(g, s, 0.4, 0.6, seed=43, iterations=90)
        assert not (np.array_equal(a.wake, c.wake) and np.array_equal(a.delivered, c.delivered))

    def test_sequential_mode_wakes_round_robin(self):
        g = self.graph()
        s = BlockSchedule((8,) * 4, g.n)
        trace = generate_trace(g, s, 1.0, 0.0, seed=0, iterations=32, wake_mode="sequential")
        validate_trace(trace)
        for t in range(32):
            assert trace.wake[t, t % g.n]

    def test_preconditions(self):
        g = self.graph()
        s = BlockSchedule((1,) * 10, g.n)
        with pytest.raises(ValueError, match="without self-loops"):
            generate_trace(g.with_self_loops(), s, 1.0, 0.0, 0, 5)
        with pytest.raises(ValueError, match="strongly connected"):
            generate_trace(DirectedGraph(4, [(0, 1)]), s, 1.0, 0.0, 0, 5)
        with pytest.raises(ValueError, match="wake_probability"):
            generate_trace(g, s, 0.0, 0.0, 0, 5)
        with pytest.raises(ValueError, match="failure_probability"):
            generate_trace(g, s, 1.0, 1.0, 0, 5)
        with pytest.raises(ValueError, match="schedule covers"):
            generate_trace(g, s, 1.0, 0.0, 0, 11)


class TestValidateTrace:
    def test_uncovered_block_rejected(self):
        g = ring_with_chord(3)
        s = BlockSchedule((2, 2), g.n)
        trace = generate_trace(g, s, 1.0, 0.0, seed=0, iterations=4)
        broken = EventTrace(
            graph=g, schedule=s, seed=0,
            wake=trace.wake, delivered=np.zeros_like(trace.delivered),
        )
        with pytest.raises(ValueError, match="never delivered"):
            validate_trace(broken)

    def test_delivery_from_sleeping_source_rejected(self):
        g = ring_with_chord(3)
        s = BlockSchedule((2, 2), g.n)
        trace = generate_trace(g, s, 1.0, 0.0, seed=0, iterations=4)
        broken = EventTrace(
            graph=g, schedule=s, seed=0,
            wake=np.zeros_like(trace.wake), delivered=trace.delivered,
        )
        with pytest.raises(ValueError, match="asleep"):
            validate_trace(broken)


class TestSingleEdgeTrace:
    def test_one_event_per_block(self):
        g = DirectedGraph(2, [(0, 1), (1, 0)], "forbidden")
        s = BlockSchedule((2, 4, 8), g.n)
        trace = single_edge_trace(g, s, iterations=14)
        events = trace.events
        active = [t for t, e in enumerate(events) if e.delivered]
        assert active == [0, 2, 6]
        assert events[0].delivered == {(0, 1)}
        assert events[2].delivered == {(1, 0)}
        assert events[6].delivered == {(0, 1)}


class TestTraceSerialization:
    GOLDEN = [
        "iter=0 wake=0,2 fail=2->0",
        "iter=1 wake= fail=",
        "iter=2 wake=1 fail=",
    ]

    def graph(self):
        return DirectedGraph(3, [(0, 1), (1, 2), (2, 0)], "forbidden")

    def test_round_trip_matches_golden(self):
        g = self.graph()
        events = events_from_lines(self.GOLDEN, g)
        assert events[0].wake == {0, 2}
        assert events[0].delivered == {(0, 1)}
        assert events[1].wake == frozenset() and events[1].delivered == frozenset()
        assert events[2].delivered == {(1, 2)}
        s = BlockSchedule((3,), g.n)
        trace = EventTrace.from_events(g, s, seed=0, events=events)
        assert list(trace_lines(trace)) == self.GOLDEN

    def test_generated_trace_round_trips(self):
        g = ring_with_chord(4)
        s = BlockSchedule((3,) * 8, g.n)
        trace = generate_trace(g, s, 0.6, 0.5, seed=9, iterations=24)
        lines = list(trace_lines(trace))
        rebuilt = EventTrace.from_events(g, s, 9, events_from_lines(lines, g))
        np.testing.assert_array_equal(rebuilt.wake, trace.wake)
        np.testing.assert_array_equal(rebuilt.delivered, trace.delivered)

    def test_unknown_edge_rejected(self):
        g = self.graph()
        s = BlockSchedule((1,), g.n)
        with pytest.raises(ValueError, match="unknown edge"):
            EventTrace.from_events(
                g, s, 0, [type(events_from_lines(self.GOLDEN, g)[0])({0}, {(0, 2)})]
            )
