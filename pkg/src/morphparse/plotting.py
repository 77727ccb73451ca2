"""Report figures written next to the tab-separated outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluator import METRICS, EvalReport  # noqa: E402


def plot_training(history: Sequence, path: Union[str, Path]) -> Path:
    """Loss, validation score and learning rate per epoch."""
    epochs = [r.epoch for r in history]
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    axes[0].plot(epochs, [r.loss for r in history], color="tab:blue")
    axes[0].set_ylabel("training loss")
    axes[1].plot(epochs, [r.score for r in history], color="tab:green")
    axes[1].set_ylabel("validation score")
    axes[2].step(epochs, [r.lr for r in history], where="post", color="tab:red")
    axes[2].set_ylabel("learning rate")
    axes[2].set_xlabel("epoch")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_report(report: EvalReport, path: Union[str, Path]) -> Path:
    """Bar chart of F1 per metric; NA metrics are left empty."""
    values = [report.f1(m) for m in METRICS]
    fig, ax = plt.subplots(figsize=(8, 4))
    xs = range(len(METRICS))
    ax.bar(xs, [v if v is not None else 0.0 for v in values], color="tab:blue")
    for x, v in zip(xs, values):
        ax.text(x, (v or 0.0) + 1, "NA" if v is None else f"{v:.1f}", ha="center", fontsize=8)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(METRICS)
    ax.set_ylim(0, 105)
    ax.set_ylabel("F1")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
