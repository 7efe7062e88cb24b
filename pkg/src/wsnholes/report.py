"""Figures for grid runs.  Everything renders off-screen to PNG files."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .metrics import parse_score  # noqa: E402

# no Software/date chunks, so reruns give identical bytes
_PNG_META = {"Software": None}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_summary(summary: list[dict], path) -> None:
    """Grouped bars of mean sensitivity and specificity, one panel per n."""
    ns = sorted({int(r["n"]) for r in summary})
    fig, axes = plt.subplots(1, len(ns), figsize=(4 * len(ns), 3.2), sharey=True, squeeze=False)
    for ax, n in zip(axes[0], ns):
        rows = [r for r in summary if int(r["n"]) == n]
        x = np.arange(len(rows))
        for off, key, color in ((-0.2, "mean_sensitivity", "tab:blue"), (0.2, "mean_specificity", "tab:orange")):
            vals = [parse_score(r[key]) for r in rows]
            ax.bar(x + off, [np.nan if v is None else v for v in vals], 0.4, color=color,
                   label=key.split("_")[1])
        ax.set_xticks(x, [f"d={r['d']}" for r in rows])
        ax.set_title(f"n = {n}")
        ax.set_ylim(0, 1.05)
    axes[0][0].set_ylabel("final snapshot")
    axes[0][0].legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_snapshot_curves(rows: list[dict], path) -> None:
    """Sensitivity and specificity against snapshot iteration, one line per cell."""
    series = defaultdict(list)
    for r in rows:
        series[(int(r["n"]), r["d"], r["seed"])].append(r)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), sharey=True)
    for (n, d, seed), rs in sorted(series.items(), key=lambda kv: (kv[0][0], float(kv[0][1]), str(kv[0][2]))):
        it = [int(r["snapshot_iter"]) for r in rs]
        for ax, key in zip(axes, ("sensitivity", "specificity")):
            y = [parse_score(r[key]) for r in rs]
            ax.plot(it, [np.nan if v is None else v for v in y], marker="o", ms=3, lw=1,
                    label=f"n={n} d={d} s={seed}")
    for ax, key in zip(axes, ("sensitivity", "specificity")):
        ax.set_xlabel("iteration")
        ax.set_title(key)
        ax.set_ylim(-0.02, 1.02)
        if any(True for _ in ax.get_lines()):
            ax.set_xscale("log")
    if series:
        axes[1].legend(fontsize=6, loc="lower right", ncol=2)
    fig.tight_layout()
    _save(fig, path)


def plot_layout(topology, positions, path, boundary_ids=(), truth_ids=()) -> None:
    """Edges and nodes of one layout; boundary nodes highlighted."""
    pos = np.asarray(positions, dtype=float)
    e = topology.edge_array
    ok = np.isfinite(pos).all(axis=1)
    if len(e):
        e = e[ok[e[:, 0]] & ok[e[:, 1]]]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_collection(LineCollection(pos[e], colors="0.75", linewidths=0.4))
    ax.scatter(*pos[ok].T, s=3, c="0.3", lw=0)
    truth = sorted(set(truth_ids))
    found = sorted(set(boundary_ids))
    if truth:
        ax.scatter(*pos[truth].T, s=18, facecolors="none", edgecolors="red", lw=0.7, label="truth")
    if found:
        ax.scatter(*pos[found].T, s=6, c="blue", lw=0, label="detected")
    if truth or found:
        ax.legend(fontsize=7, loc="upper right")
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_axis_off()
    _save(fig, path)
