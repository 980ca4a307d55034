"""Dense-matrix reference machinery used to certify simulation runs.

Everything here works on plain numpy float arrays and favors directness
over scale: scenario matrices stay small (a few dozen rows), so the value
of this module is an independent, easily audited computation path rather
than performance.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

MatrixSource = Callable[[int], np.ndarray] | Sequence[np.ndarray]


def _entry(source: MatrixSource, k: int) -> np.ndarray:
    if callable(source):
        return np.asarray(source(k), dtype=float)
    return np.asarray(source[k], dtype=float)


def threshold(matrix: np.ndarray, alpha: float) -> np.ndarray:
    """Copy of ``matrix`` with every entry smaller than ``alpha`` set to zero."""
    a = np.asarray(matrix, dtype=float)
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    if alpha < 0:
        raise ValueError("threshold must be nonnegative")
    return np.where(a < alpha, 0.0, a)


def product_range(source: MatrixSource, first: int, last: int) -> np.ndarray:
    """Ordered product of matrices ``last`` down to ``first``, inclusive.

    The element at index ``last`` is leftmost, matching how per-iteration
    update matrices compose when applied to a state vector over time.
    Evaluated as a streaming left-fold from ``first`` upward, which is the
    same ordering without materializing the sequence.
    """
    if first > last:
        raise ValueError(f"empty product range [{first}, {last}]")
    product = _entry(source, first)
    if product.ndim != 2 or product.shape[0] != product.shape[1]:
        raise ValueError(f"matrix {first} is not square: shape {product.shape}")
    for k in range(first + 1, last + 1):
        step = _entry(source, k)
        if step.shape != product.shape:
            raise ValueError(
                f"matrix {k} has shape {step.shape}, expected {product.shape}"
            )
        product = step @ product
    return product


def check_stochastic(matrix: np.ndarray, mode: str = "row", tol: float = 1e-12) -> bool:
    """True iff entries are >= -tol and each row (or column) sums to 1 within tol."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if mode not in ("row", "column"):
        raise ValueError(f"mode must be 'row' or 'column', got {mode!r}")
    if not (a >= -tol).all():
        return False
    axis = 1 if mode == "row" else 0
    sums = a.sum(axis=axis)
    return bool(np.abs(sums - 1.0).max() <= tol)


def spread(values) -> float:
    """max minus min of a vector; the functional all contraction arguments use."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("spread of an empty vector is undefined")
    return float(v.max() - v.min())


@dataclass(frozen=True)
class WindowPositivityReport:
    """Outcome of multiplying one connectivity window of update matrices."""

    strictly_positive: bool
    min_entry: float
    bound: float

    @property
    def meets_bound(self) -> bool:
        return self.strictly_positive and self.min_entry >= self.bound


def window_positivity(
    source: MatrixSource,
    start: int,
    stop: int,
    alpha: float,
    rows: int | None = None,
) -> WindowPositivityReport:
    """Check that the product over iterations ``start..stop-1`` mixed fully.

    A window spanning n consecutive connectivity blocks must yield a
    product whose checked rows are strictly positive with entries no
    smaller than ``alpha ** (stop - start)``. ``rows`` limits the claim to
    the first ``rows`` rows (the agent block of an augmented system);
    ``None`` checks the whole matrix.
    """
    if stop <= start:
        raise ValueError(f"window [{start}, {stop}) is empty")
    product = product_range(source, start, stop - 1)
    checked = product if rows is None else product[:rows, :]
    bound = alpha ** (stop - start)
    return WindowPositivityReport(
        strictly_positive=bool((checked > 0).all()),
        min_entry=float(checked.min()),
        bound=float(bound),
    )


@dataclass(frozen=True)
class ContractionReport:
    spread_before: float
    spread_after: float
    contraction_bound: float
    contracts: bool      # spread_after <= (1 - n*floor) * spread_before
    stays_in_range: bool  # every output entry within [min, max] of the input


def contraction_check(matrix: np.ndarray, values, floor: float) -> ContractionReport:
    """Apply a row-stochastic matrix with entry floor ``floor`` and check both
    the spread contraction and the convex-combination range bound."""
    a = np.asarray(matrix, dtype=float)
    v = np.asarray(values, dtype=float)
    if floor <= 0:
        raise ValueError("entry floor must be positive")
    if (a < floor).any():
        raise ValueError(f"matrix has entries below the floor {floor}")
    if not check_stochastic(a, "row", tol=1e-9):
        raise ValueError("matrix is not row-stochastic")
    n = a.shape[0]
    out = a @ v
    before = spread(v)
    after = spread(out)
    bound = (1.0 - n * floor) * before
    return ContractionReport(
        spread_before=before,
        spread_after=after,
        contraction_bound=float(bound),
        contracts=bool(after <= bound + 1e-12 * max(1.0, before)),
        stays_in_range=bool((out >= v.min() - 1e-12).all() and (out <= v.max() + 1e-12).all()),
    )
