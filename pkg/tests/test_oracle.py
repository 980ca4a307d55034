import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pushsum.oracle import (
    check_stochastic,
    contraction_check,
    product_range,
    spread,
    threshold,
    window_positivity,
)


class TestThreshold:
    def test_elementwise(self):
        a = np.array([[0.3, 0.7], [0.5, 0.5]])
        expected = np.array([[0.0, 0.7], [0.5, 0.5]])
        np.testing.assert_array_equal(threshold(a, 0.4), expected)

    def test_zero_threshold_is_identity(self):
        a = np.array([[0.1, 0.9], [0.4, 0.6]])
        np.testing.assert_array_equal(threshold(a, 0.0), a)

    def test_everything_below(self):
        np.testing.assert_array_equal(threshold(np.array([[1.0]]), 2.0), np.array([[0.0]]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            threshold(np.array([[np.inf]]), 0.5)

    @given(
        arrays(np.float64, (3, 3), elements=st.floats(0, 10)),
        st.floats(0, 5),
    )
    @settings(max_examples=60, deadline=None)
    def test_idempotent(self, a, alpha):
        once = threshold(a, alpha)
        np.testing.assert_array_equal(threshold(once, alpha), once)


class TestProductRange:
    def test_identities(self):
        seq = [np.eye(3)] * 5
        np.testing.assert_array_equal(product_range(seq, 1, 4), np.eye(3))

    def test_singleton(self):
        seq = [np.eye(2) * (k + 1) for k in range(5)]
        np.testing.assert_array_equal(product_range(seq, 3, 3), seq[3])

    def test_swap_twice_is_identity(self):
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(product_range([swap, swap], 0, 1), np.eye(2))

    def test_order_is_later_on_the_left(self):
        a = np.array([[1.0, 1.0], [0.0, 1.0]])
        b = np.array([[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(product_range([a, b], 0, 1), b @ a)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError, match="empty product range"):
            product_range([np.eye(2)], 1, 0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            product_range([np.eye(2), np.eye(3)], 0, 1)

    def test_callable_source(self):
        np.testing.assert_array_equal(product_range(lambda k: np.eye(2) * 2, 0, 1), np.eye(2) * 4)

    def test_split_associativity(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            seq = [rng.random((3, 3)) for _ in range(6)]
            for k1 in range(6):
                for k2 in range(k1, 6):
                    full = product_range(seq, k1, k2)
                    for cut in range(k1, k2):
                        left = product_range(seq, cut + 1, k2)
                        right = product_range(seq, k1, cut)
                        np.testing.assert_allclose(full, left @ right, rtol=1e-12, atol=1e-12)


class TestCheckStochastic:
    def test_row_stochastic(self):
        a = np.array([[0.5, 0.5], [0.2, 0.8]])
        assert check_stochastic(a, "row")

    def test_column_sums_off(self):
        a = np.array([[0.5, 0.5], [0.2, 0.8]])
        assert not check_stochastic(a, "column")

    def test_identity_both_modes(self):
        assert check_stochastic(np.eye(4), "row")
        assert check_stochastic(np.eye(4), "column")

    def test_negative_entry_fails(self):
        a = np.array([[1.5, -0.5], [0.0, 1.0]])
        assert not check_stochastic(a, "row")

    def test_column_stochastic_products_stay_column_stochastic(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            mats = []
            for _ in range(rng.integers(2, 11)):
                raw = rng.random((4, 4)) + 0.01
                mats.append(raw / raw.sum(axis=0, keepdims=True))
            assert check_stochastic(product_range(mats, 0, len(mats) - 1), "column", 1e-12)


class TestSpread:
    def test_constant(self):
        assert spread([1.0, 1.0, 1.0]) == 0.0

    def test_two_values(self):
        assert spread([0.0, 2.0]) == 2.0

    def test_signed(self):
        assert spread([-1.0, 0.0, 3.0]) == 4.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            spread([])


class TestWindowPositivity:
    def test_two_node_complete_equal_weights(self):
        # product of [[.5,.5],[.5,.5]] with itself is itself; the minimum
        # entry 0.5 clears the floor 0.5**2 = 0.25 (hand-multiplied)
        a = np.array([[0.5, 0.5], [0.5, 0.5]])
        report = window_positivity([a, a], 0, 2, alpha=0.5)
        assert report.strictly_positive
        assert report.min_entry == 0.5
        assert report.bound == 0.25
        assert report.meets_bound

    def test_identity_sequence_never_mixes(self):
        report = window_positivity([np.eye(3)] * 3, 0, 3, alpha=0.5)
        assert not report.strictly_positive

    def test_three_node_ring_mixes_in_three_steps(self):
        # ring with self-loops, equal weights, one-iteration blocks: the
        # window of length n=3 must be strictly positive with floor (1/3)**3
        a = np.zeros((3, 3))
        for i in range(3):
            a[i, i] = 0.5
            a[i, (i - 1) % 3] = 0.5
        report = window_positivity([a, a, a], 0, 3, alpha=1.0 / 3.0)
        assert report.strictly_positive
        assert report.meets_bound

    def test_rows_restriction(self):
        # first two rows positive, bottom row not: the restricted check
        # passes while the whole-matrix check fails
        block = np.array([
            [0.50, 0.50, 0.50],
            [0.25, 0.25, 0.50],
            [0.25, 0.25, 0.00],
        ])
        restricted = window_positivity([block], 0, 1, alpha=0.25, rows=2)
        assert restricted.strictly_positive and restricted.meets_bound
        assert not window_positivity([block], 0, 1, alpha=0.25).strictly_positive

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            window_positivity([np.eye(2)], 2, 2, alpha=0.5)


class TestContraction:
    def test_averaging_matrix_contracts_to_zero(self):
        a = np.array([[0.5, 0.5], [0.5, 0.5]])
        report = contraction_check(a, np.array([0.0, 2.0]), floor=0.5)
        assert report.spread_before == 2.0
        assert report.spread_after == 0.0
        assert report.contraction_bound == 0.0
        assert report.contracts and report.stays_in_range

    def test_identity_violates_floor(self):
        with pytest.raises(ValueError, match="below the floor"):
            contraction_check(np.eye(2), np.array([0.0, 1.0]), floor=0.1)

    def test_thousand_seeded_trials(self):
        rng = np.random.default_rng(99)
        floor = 0.1
        for _ in range(1000):
            extra = rng.dirichlet(np.ones(3), size=3) * (1 - 3 * floor)
            a = floor + extra
            u = rng.normal(size=3) * 10
            report = contraction_check(a, u, floor=floor)
            assert report.contracts and report.stays_in_range


class TestInfiniteProductCriterion:
    # direct partial-product evaluation is the oracle here: decaying
    # factors 1/(k+1) push the product below any epsilon, summable
    # factors 2**-k leave it bounded away from zero

    def test_harmonic_like_factors_vanish(self):
        product = 1.0
        first_below = None
        for k in range(1, 1500):
            product *= 1.0 - 1.0 / (k + 1)
            if product < 1e-3:
                first_below = k
                break
        assert first_below == 1000
        # closed form: the partial product telescopes to 1/(k+1)
        assert product == pytest.approx(1.0 / 1001.0, rel=1e-12)

    def test_summable_factors_keep_a_floor(self):
        product = 1.0
        for k in range(1, 61):
            product *= 1.0 - 2.0 ** -k
        assert product == pytest.approx(0.2887880950866024, rel=1e-12)
        assert product >= 0.28
