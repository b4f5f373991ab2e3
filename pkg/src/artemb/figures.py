"""Matplotlib rendering for the report path: confusion heatmaps and metric bars."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from artemb.metrics import EvalReport

ANNOTATE_MAX_CLASSES = 15


def plot_confusion(report: EvalReport, path: str | Path, model: str = "") -> None:
    """Row-normalized confusion heatmap with raw counts annotated when small."""
    cm = report.confusion.astype(np.float64)
    row_sums = cm.sum(axis=1, keepdims=True)
    shown = np.divide(cm, row_sums, out=np.zeros_like(cm), where=row_sums > 0)
    labels = [pc.label for pc in report.per_class]
    n = len(labels)

    size = max(4.0, 0.45 * n + 2.0)
    fig, ax = plt.subplots(figsize=(size + 1.2, size))
    im = ax.imshow(shown, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n), labels, rotation=90, fontsize=8)
    ax.set_yticks(range(n), labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    title = f"{model} / {report.task}" if model else report.task
    ax.set_title(f"{title} (acc@1 {100 * report.acc1:.1f}%)")
    fig.colorbar(im, ax=ax, fraction=0.046, label="row fraction")
    if n <= ANNOTATE_MAX_CLASSES:
        for i in range(n):
            for j in range(n):
                if report.confusion[i, j]:
                    ax.text(
                        j,
                        i,
                        str(int(report.confusion[i, j])),
                        ha="center",
                        va="center",
                        fontsize=7,
                        color="white" if shown[i, j] < 0.6 else "black",
                    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_metric_bars(
    reports: Sequence[Sequence[EvalReport]],
    model_names: Sequence[str],
    path: str | Path,
    metric: str = "acc1",
) -> None:
    """Grouped bars, one group per task, one bar per model."""
    tasks = [r.task for r in reports[0]] if reports else []
    values = {
        name: [getattr(rep, metric) * 100.0 for rep in row]
        for name, row in zip(model_names, reports)
    }
    fig, ax = plt.subplots(figsize=(max(5.0, 1.8 * len(tasks) * max(1, len(model_names))), 4.0))
    x = np.arange(len(tasks))
    width = 0.8 / max(1, len(model_names))
    for i, name in enumerate(model_names):
        offs = (i - (len(model_names) - 1) / 2.0) * width
        bars = ax.bar(x + offs, values[name], width, label=name)
        ax.bar_label(bars, fmt="%.1f", fontsize=8)
    ax.set_xticks(x, tasks)
    ax.set_ylim(0, 105)
    ax.set_ylabel({"acc1": "acc@1 (%)", "f1": "F1 (%)"}.get(metric, f"{metric} (%)"))
    ax.set_title("classification performance")
    if model_names:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_history(history_doc: dict, path: str | Path) -> None:
    """Train/val loss curves from a training history JSON document."""
    epochs = [e["epoch"] for e in history_doc["epochs"]]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(epochs, [e["train_loss"] for e in history_doc["epochs"]], label="train loss")
    ax.plot(epochs, [e["val_loss"] for e in history_doc["epochs"]], label="val loss")
    best = history_doc.get("best_epoch")
    if best:
        ax.axvline(best, color="gray", linestyle="--", linewidth=1, label=f"best epoch {best}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
