"""Figure rendering for the report paths.

Every reporting command writes a PNG next to its CSV so results can be read
at a glance.  Rendering is always off-screen (Agg backend).
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_run(points, candidates, kept_idx, final_centers, path: str | Path) -> None:
    """Scatter of the first two coordinates: data sample, candidates, output."""
    pts = np.asarray(points)
    if pts.shape[1] == 1:
        pts = np.hstack([pts, np.zeros((pts.shape[0], 1))])
    sample = pts[:: max(1, pts.shape[0] // 4000)]
    fig, ax = plt.subplots(figsize=(7, 6))
    ax.scatter(sample[:, 0], sample[:, 1], s=4, alpha=0.25, color="#8899aa", label="data")
    if candidates:
        cand = np.stack([c.center for c in candidates])
        if cand.shape[1] == 1:
            cand = np.hstack([cand, np.zeros((cand.shape[0], 1))])
        kept_mask = np.zeros(len(candidates), dtype=bool)
        kept_mask[list(kept_idx)] = True
        ax.scatter(cand[~kept_mask, 0], cand[~kept_mask, 1], s=26, marker="x",
                   color="#cc6666", label="dropped candidates")
        ax.scatter(cand[kept_mask, 0], cand[kept_mask, 1], s=30, marker="o",
                   facecolors="none", edgecolors="#3366cc", label="kept candidates")
    fc = np.asarray(final_centers)
    if fc.shape[1] == 1:
        fc = np.hstack([fc, np.zeros((fc.shape[0], 1))])
    ax.scatter(fc[:, 0], fc[:, 1], s=130, marker="*", color="#111111", label="output centers")
    ax.set_xlabel("x0")
    ax.set_ylabel("x1")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("run: data, candidates, output centers")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_scale(rows: list[dict], slope: float, intercept: float, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 5))
    ns = np.array([r["n"] for r in rows], dtype=float)
    res = np.array([r["mean_residual"] for r in rows], dtype=float)
    ci = np.array([r["ci95"] for r in rows], dtype=float)
    ax.errorbar(ns, res, yerr=ci, fmt="o", capsize=4, color="#333388", label="mean residual")
    if math.isfinite(slope):
        xs = np.linspace(ns.min(), ns.max(), 64)
        ax.plot(xs, np.exp(intercept) * xs**slope, "--", color="#aa3333",
                label=f"fit slope {slope:.3f}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("additive residual")
    ax.legend()
    ax.set_title("additive error vs population size")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_lb(rows: list[dict], path: str | Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    by_n: dict[int, list[dict]] = {}
    for r in rows:
        by_n.setdefault(int(r["n"]), []).append(r)
    for n, group in sorted(by_n.items()):
        ones = [g for g in group if g["tau"] > 0]
        taus = [g["tau"] for g in ones]
        errs = [g["decision_error_rate"] for g in ones]
        axes[0].plot(taus, errs, "o-", label=f"n={n}")
        costs = [g["mean_cost"] for g in ones]
        axes[1].plot(taus, costs, "s-", label=f"n={n}")
        floor = [g["cost_floor"] for g in ones]
        axes[1].plot(taus, floor, ":", color="#999999")
    axes[0].set_xlabel("tau (planted ones)")
    axes[0].set_ylabel("decision error rate")
    axes[0].set_xscale("log")
    axes[0].legend(fontsize=8)
    axes[1].set_xlabel("tau (planted ones)")
    axes[1].set_ylabel("mean clustering cost (dotted: error floor)")
    axes[1].set_xscale("log")
    axes[1].set_yscale("symlog", linthresh=1e-3)
    axes[1].legend(fontsize=8)
    fig.suptitle("bit-counting reduction: decisions and realized costs")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_eval(metrics: dict, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    names = ["cost_private", "cost_baseline"]
    vals = [metrics["cost_private"], metrics["cost_baseline"]]
    if metrics.get("opt_discrete") is not None:
        names.append("opt_discrete")
        vals.append(metrics["opt_discrete"])
    ax.bar(names, vals, color=["#3366cc", "#66aa66", "#aaaaaa"][: len(names)])
    ax.set_ylabel(f"cost (p={metrics.get('p', 2)})")
    ax.set_title(f"ratio {metrics['ratio']:.3f}, residual {metrics['additive_residual']:.4g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
