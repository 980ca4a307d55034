"""Report figures rendered next to the delimited outputs.

Uses the non-interactive Agg backend so rendering works headless. The
simulation library itself only emits data; everything visual stays in
this module, consumed by the CLI report path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RunResult


def save_run_figure(result: RunResult, path, title: str | None = None) -> None:
    """Two-panel convergence figure: estimate spread, then residuals/weights."""
    series = result.series
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    if len(series):
        top.plot(series.iteration, np.maximum(series.spread_z, 1e-300), color="tab:blue")
        top.set_yscale("log")
    top.set_ylabel("estimate spread (max - min)")
    if title:
        top.set_title(title)
    if result.converged_at is not None:
        top.axvline(result.converged_at, color="tab:green", linestyle="--", linewidth=1,
                    label=f"converged at {result.converged_at}")
        top.legend(loc="upper right", fontsize=8)
    if len(series):
        for values, label, color in (
            (series.res_x, "x-mass residual", "tab:red"),
            (series.res_y, "y-mass residual", "tab:orange"),
            (series.min_y, "min agent weight", "tab:purple"),
            (series.max_v, "max pending weight", "tab:gray"),
        ):
            finite = np.isfinite(values)
            if finite.any():
                bottom.plot(series.iteration[finite],
                            np.maximum(values[finite], 1e-300),
                            label=label, color=color, linewidth=1)
        bottom.set_yscale("log")
        bottom.legend(loc="best", fontsize=8)
    bottom.set_xlabel("iteration")
    bottom.set_ylabel("residuals / weights")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(param: str, values, final_spreads, converged_ats, path) -> None:
    """Final spread and convergence iteration against the swept parameter."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    xs = np.arange(len(values))
    spreads = np.array(
        [s if s is not None and np.isfinite(s) else np.nan for s in final_spreads],
        dtype=float,
    )
    left.plot(xs, np.maximum(spreads, 1e-300), "o-", color="tab:blue")
    left.set_yscale("log")
    left.set_xticks(xs, [str(v) for v in values])
    left.set_xlabel(param)
    left.set_ylabel("final estimate spread")
    iters = np.array(
        [c if c is not None else np.nan for c in converged_ats], dtype=float
    )
    right.plot(xs, iters, "s-", color="tab:green")
    right.set_xticks(xs, [str(v) for v in values])
    right.set_xlabel(param)
    right.set_ylabel("converged at iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
