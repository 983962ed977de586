"""Static SVG figures for benchmark reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "mixtrack"
_SVG_META = {"Date": None, "Creator": None}
DENSITY_ORDER = ("low", "medium", "high")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_metric_vs_density(rows, path, metric: str = "rms", ylabel: str = "RMS error (m)"):
    """Line per method of ``metric`` against density class.

    ``rows`` are dicts with ``density``, ``method`` and ``metric`` keys.
    """
    densities = [d for d in DENSITY_ORDER if any(r["density"] == d for r in rows)]
    methods = list(dict.fromkeys(r["method"] for r in rows))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(len(densities))
    for m in methods:
        y = [next((r[metric] for r in rows if r["method"] == m and r["density"] == d), np.nan) for d in densities]
        ax.plot(x, y, marker="o", label=m)
    ax.set_xticks(x)
    ax.set_xticklabels(densities)
    ax.set_xlabel("density")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def plot_ranges(stats, path, ylabel: str = "final replay error"):
    """Min-max bars with a dot at the mean, one group per task.

    ``stats`` maps task -> method -> (min, mean, max).
    """
    tasks = list(stats)
    methods = list(dict.fromkeys(m for t in tasks for m in stats[t]))
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(tasks), 3.5))
    width = 0.8 / max(len(methods), 1)
    for i, m in enumerate(methods):
        xs = np.arange(len(tasks)) + (i - (len(methods) - 1) / 2) * width
        lo = np.array([stats[t][m][0] for t in tasks])
        mid = np.array([stats[t][m][1] for t in tasks])
        hi = np.array([stats[t][m][2] for t in tasks])
        line = ax.vlines(xs, lo, hi, linewidth=3, alpha=0.6, label=m)
        ax.plot(xs, mid, "o", color="black", markersize=4)
        line.set_color(f"C{i}")
    ax.set_xticks(np.arange(len(tasks)))
    ax.set_xticklabels(tasks)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)
