"""Matplotlib renderings of training curves and evaluation reports.

All figures are written straight to files (Agg backend); nothing here
opens a window. Paths are returned so callers can log what was written.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .actions import DIM_NAMES
from .evaluation import EvalReport, metric_name


def plot_loss_curves(curves: dict[str, list[tuple[int, float]]], path: str | Path) -> Path:
    """One line per labeled training run, epoch on x, mean loss on y."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        epochs = [e for e, _ in curve]
        losses = [l for _, l in curve]
        ax.plot(epochs, losses, marker="o", markersize=2.5, linewidth=1.2, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    ax.set_title("training loss")
    ax.grid(alpha=0.3)
    if curves:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_per_dim_accuracy(report: EvalReport, path: str | Path) -> Path:
    """Grouped bars: one group per action dimension, one bar per k."""
    n_dims = len(DIM_NAMES)
    x = np.arange(n_dims)
    width = 0.8 / max(1, len(report.ks))

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, k in enumerate(report.ks):
        values = [v * 100 for v in report.per_dim[k]]
        ax.bar(x + (i - (len(report.ks) - 1) / 2) * width, values, width,
               label=f"{metric_name(k)}")
    ax.set_xticks(x)
    ax.set_xticklabels(DIM_NAMES)
    ax.set_ylabel("accuracy (%)")
    ax.set_title(f"{report.model_tag} on {report.dataset_tag}")
    ax.set_ylim(0, 100)
    ax.grid(axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_comparison(comparison: dict, path: str | Path) -> Path:
    """Side-by-side pooled accuracies for two models across metrics."""
    metrics = list(comparison["metrics"].keys())
    a_vals = [comparison["metrics"][m]["a"] * 100 for m in metrics]
    b_vals = [comparison["metrics"][m]["b"] * 100 for m in metrics]
    x = np.arange(len(metrics))

    fig, ax = plt.subplots(figsize=(6, 4))
    bars_a = ax.bar(x - 0.2, a_vals, 0.4, label=comparison["model_a"])
    bars_b = ax.bar(x + 0.2, b_vals, 0.4, label=comparison["model_b"])
    for bars in (bars_a, bars_b):
        for bar in bars:
            ax.annotate(f"{bar.get_height():.2f}",
                        (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                        ha="center", va="bottom", fontsize=8)
    ax.set_xticks(x)
    ax.set_xticklabels(metrics)
    ax.set_ylabel("pooled accuracy (%)")
    ax.set_title(f"comparison on {comparison['dataset']}")
    ax.grid(axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
