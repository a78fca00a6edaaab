"""Figure rendering for the report path: PNG files next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corpus import LABEL_NAMES
from .evaluation import ConfusionMatrix, ModelComparison, SpanF1Result


def save_f1_histogram(result: SpanF1Result, path: str | Path) -> Path:
    """Distribution of per-post F1 with the macro average marked."""
    path = Path(path)
    scores = [row[3] for row in result.per_post]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(scores, bins=20, range=(0.0, 1.0), color="#4878a8", edgecolor="white")
    ax.axvline(result.macro_f1, color="#b2453c", linestyle="--",
               label=f"macro F1 {result.macro_f1:.5f}")
    ax.set_xlabel("per-post span F1")
    ax.set_ylabel("posts")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _draw_matrix(ax, matrix: ConfusionMatrix, title: str) -> None:
    cells = np.array([[matrix.tn, matrix.fp], [matrix.fn, matrix.tp]], dtype=float)
    ax.imshow(cells, cmap="Blues")
    for (i, j), value in np.ndenumerate(cells):
        ax.text(j, i, f"{int(value)}", ha="center", va="center",
                color="black" if value < cells.max() * 0.6 else "white")
    ax.set_xticks([0, 1], [LABEL_NAMES[0], LABEL_NAMES[1]])
    ax.set_yticks([0, 1], [LABEL_NAMES[0], LABEL_NAMES[1]])
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)


def save_comparison_heatmaps(comparison: ModelComparison, path: str | Path) -> Path:
    """Side-by-side confusion matrices over the filtered token subset."""
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    _draw_matrix(axes[0], comparison.matrix_a, "model A")
    _draw_matrix(axes[1], comparison.matrix_b, "model B")
    d = comparison.deltas
    fig.suptitle(
        f"delta (B-A): tn {d['tn']:+d}  fp {d['fp']:+d}  fn {d['fn']:+d}  tp {d['tp']:+d}"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_seed_chart(rows: list[tuple[int, float]], path: str | Path) -> Path:
    """Validation F1 per seed with the spread annotated."""
    path = Path(path)
    seeds = [str(seed) for seed, _ in rows]
    scores = [f1 for _, f1 in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(seeds, scores, color="#4878a8")
    lo, hi = min(scores), max(scores)
    ax.axhline(hi, color="#b2453c", linestyle="--", linewidth=1)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("seed")
    ax.set_ylabel("validation macro span F1")
    ax.set_title(f"range {hi - lo:.5f} ({lo:.5f} to {hi:.5f})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_training_history(history: list[float], path: str | Path) -> Path:
    """Validation F1 per epoch for one training run."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = np.arange(1, len(history) + 1)
    ax.plot(epochs, history, marker="o", color="#4878a8")
    ax.set_xticks(epochs)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation macro span F1")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
