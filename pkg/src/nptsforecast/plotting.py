"""Figures written next to the CSV outputs of the command-line tools."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files, so reruns are byte-identical
_PNG_META = {"Software": None}

STYLE = {
    "figure.figsize": (7.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path) -> None:
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)


def calibration_figure(reports: Sequence, path) -> None:
    """Coverage against quantile level (left) and its absolute error (right)."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
        levels = np.array(reports[0].levels)
        ax1.plot([0, 1], [0, 1], color="0.6", ls="--", lw=1, label="ideal")
        for r in reports:
            cov = np.array([r.coverage[a] for a in levels])
            ax1.plot(levels, cov, marker="o", ms=3, label=r.model)
            ax2.plot(levels, np.abs(cov - levels), marker="o", ms=3, label=r.model)
        ax1.set_xlabel("quantile level")
        ax1.set_ylabel("coverage")
        ax1.set_xlim(0, 1)
        ax1.set_ylim(0, 1)
        ax1.legend(loc="upper left")
        ax2.set_xlabel("quantile level")
        ax2.set_ylabel("|coverage - level|")
        fig.tight_layout()
        _save(fig, path)


def histogram_figure(counts, edges, path, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="tab:blue", edgecolor="white", lw=0.3)
        ax.set_xlabel("observed value")
        ax.set_ylabel("count")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def probe_figure(timestamps, values, probabilities, path, title: str = "") -> None:
    """Context values with the sampling probability of each index on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(9.0, 3.5))
        x = np.arange(len(values))
        ax.plot(x, values, color="tab:blue", lw=1)
        ax.set_ylabel("value")
        ax.set_xlabel("context index")
        ax2 = ax.twinx()
        ax2.plot(x, probabilities, color="tab:orange", lw=1)
        ax2.set_ylabel("sampling probability", color="tab:orange")
        ax2.grid(False)
        step = max(1, len(x) // 8)
        ax.set_xticks(x[::step])
        ax.set_xticklabels([t.strftime("%m-%d %H:%M") for t in timestamps[::step]], rotation=30, ha="right")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def forecast_figure(history, quantiles: dict, path, title: str = "", actuals=None, tail: int = 200) -> None:
    """Median with 50% and 90% intervals after the last ``tail`` observations."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        hist = np.asarray(history)[-tail:]
        n = hist.size
        ax.plot(np.arange(n), hist, color="0.2", lw=1, label="history")
        H = len(next(iter(quantiles.values())))
        xf = np.arange(n, n + H)

        def q(a):
            return quantiles[min(quantiles, key=lambda k: abs(float(k) - a))]

        ax.fill_between(xf, q(0.05), q(0.95), color="tab:green", alpha=0.2, lw=0, label="90% interval")
        ax.fill_between(xf, q(0.25), q(0.75), color="tab:green", alpha=0.4, lw=0, label="50% interval")
        ax.plot(xf, q(0.5), color="darkgreen", lw=1.2, label="median")
        if actuals is not None:
            ax.plot(xf, actuals, color="tab:red", lw=1, label="actual")
        ax.legend(loc="upper left")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
