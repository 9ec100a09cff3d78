"""Static figure rendering for monitor and imputation reports.

Figures are drawn with the Agg backend and saved next to the delimited
outputs; nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_BAND_KWARGS = dict(color="tab:blue", alpha=0.2, linewidth=0)
_DPI = 150


def _observed_runs(mask):
    """Contiguous True spans as (start, stop) pairs, stop exclusive."""
    runs = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def monitor_figure(times, targets, target_mask, means, lowers, uppers):
    """Predicted series with a 2-sd band against the observed target."""
    times = np.asarray(times)
    fig, ax = plt.subplots(figsize=(9.0, 4.0))
    ax.fill_between(times, lowers, uppers, label="+/- 2 sd", **_BAND_KWARGS)
    ax.plot(times, means, color="tab:blue", linewidth=1.3, label="prediction")
    mask = np.asarray(target_mask, dtype=bool)
    if mask.any():
        ax.plot(
            times[mask],
            np.asarray(targets)[mask],
            color="black",
            linewidth=1.0,
            label="survey",
        )
    ax.set_xlabel("time index")
    ax.set_ylabel("index value")
    ax.legend(frameon=False, loc="best")
    fig.tight_layout()
    return fig


def reduction_figure(times, truth, truth_mask, filled, observed_mask):
    """Filled series against the truth, with observed spans shaded."""
    times = np.asarray(times)
    fig, ax = plt.subplots(figsize=(9.0, 4.0))
    for start, stop in _observed_runs(np.asarray(observed_mask, dtype=bool)):
        ax.axvspan(
            times[start],
            times[stop - 1],
            color="tab:green",
            alpha=0.12,
            linewidth=0,
        )
    mask = np.asarray(truth_mask, dtype=bool)
    if mask.any():
        ax.plot(
            times[mask],
            np.asarray(truth)[mask],
            color="black",
            linewidth=1.0,
            label="survey",
        )
    ax.plot(times, filled, color="tab:blue", linewidth=1.2, label="filled")
    ax.set_xlabel("time index")
    ax.set_ylabel("index value")
    ax.legend(frameon=False, loc="best")
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
