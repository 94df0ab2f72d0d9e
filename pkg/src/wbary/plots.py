"""Figure rendering for run artifacts.

Every delimited export gets a rendered companion: scatter PNGs next to
sample CSVs and a training-curve PNG next to report.jsonl. Batch use only,
so the Agg backend is forced before pyplot loads.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def scatter_png(points: np.ndarray, path, title: str = "") -> None:
    """2D scatter; higher-dimensional clouds show the first two coordinates."""
    pts = np.asarray(points)
    fig, ax = plt.subplots(figsize=(5, 5))
    if pts.shape[1] == 1:
        ax.scatter(pts[:, 0], np.zeros(len(pts)), s=4, alpha=0.5)
        ax.set_xlabel("x0")
    else:
        ax.scatter(pts[:, 0], pts[:, 1], s=4, alpha=0.5)
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
        if pts.shape[1] > 2:
            ax.set_title(f"{title} (first two of {pts.shape[1]} coords)".strip())
    if title and pts.shape[1] <= 2:
        ax.set_title(title)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def training_curves_png(records: list[dict], path) -> None:
    """Objective breakdown over cycles, plus the UVP trace when present."""
    cycles = [r["cycle"] for r in records]
    totals = [r["total"] for r in records]
    uvp_pts = [(r["cycle"], r["uvp"]) for r in records if r.get("uvp") is not None]

    n_rows = 2 if uvp_pts else 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(7, 3.2 * n_rows), squeeze=False)
    ax = axes[0][0]
    ax.plot(cycles, totals, lw=0.8, label="total")
    if records and records[0].get("J"):
        gen = [r["gen_term"] for r in records]
        ax.plot(cycles, gen, lw=0.8, label="generator term")
    ax.set_xlabel("outer cycle")
    ax.set_ylabel("objective")
    ax.legend(loc="best", fontsize=8)
    if uvp_pts:
        ax = axes[1][0]
        ax.semilogy([c for c, _ in uvp_pts], [max(v, 1e-6) for _, v in uvp_pts],
                    marker="o", ms=3, lw=0.8)
        ax.set_xlabel("outer cycle")
        ax.set_ylabel("UVP %")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
