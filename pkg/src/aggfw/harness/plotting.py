"""Static figures for run and study outputs.

matplotlib is imported lazily with the Agg backend so that headless runs and
--no-plot paths never touch a display.
"""

from __future__ import annotations

from pathlib import Path

__all__ = ["plot_objective", "plot_scaling"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_objective(path, ks, series: dict, f_star: float | None = None) -> Path:
    """Objective value versus round, one curve per labeled series."""
    plt = _pyplot()
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in series.items():
        ax.plot(ks, values, label=label)
    if f_star is not None:
        ax.axhline(f_star, color="black", linestyle=":", linewidth=1.0, label="optimal")
    ax.set_xlabel("round")
    ax.set_ylabel("objective")
    ax.set_xscale("symlog")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scaling(path, rows) -> Path:
    """Subproblem median cost versus dimension, one curve per algorithm."""
    plt = _pyplot()
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    by_alg: dict[str, list] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, []).append((r.n, r.subproblem_median_ns))
    for alg, points in by_alg.items():
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=alg)
    ax.set_xlabel("per-agent dimension")
    ax.set_ylabel("subproblem median (ns)")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
