"""Figure and CSV emission for CLI verbs.

Every plot is paired with a CSV of the underlying numbers so results stay
inspectable without a Python runtime.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(losses, path_png, path_csv) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(losses, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path_png, dpi=120)
    plt.close(fig)
    with open(path_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows(enumerate(losses))


def save_sequence_grid(sequences, path_png, title: str = "") -> None:
    """Rows of sequences: images as frame strips, vectors as heatmaps."""
    sequences = [np.asarray(s) for s in sequences]
    rows = len(sequences)
    if sequences[0].ndim == 4:  # (V, C, H, W) image sequence
        cols = sequences[0].shape[0]
        fig, axes = plt.subplots(rows, cols, figsize=(cols * 1.1, rows * 1.2))
        axes = np.atleast_2d(axes)
        for r, seq in enumerate(sequences):
            for c in range(cols):
                ax = axes[r, c]
                ax.imshow(seq[c, 0], cmap="gray", vmin=0.0, vmax=1.0)
                ax.set_xticks([])
                ax.set_yticks([])
    else:  # (V, d) vector sequence
        fig, axes = plt.subplots(rows, 1, figsize=(6, rows * 1.2), squeeze=False)
        for r, seq in enumerate(sequences):
            ax = axes[r, 0]
            ax.imshow(seq.T, aspect="auto", cmap="viridis")
            ax.set_yticks([])
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path_png, dpi=120)
    plt.close(fig)


def save_table_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def ensure_run_dirs(run_dir) -> dict:
    run = Path(run_dir)
    dirs = {"run": run, "figures": run / "figures", "checkpoints": run / "checkpoints"}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    return dirs
