"""Rendering of run artifacts: loss curves and evaluation figures.

Everything draws through the Agg backend and writes PNG files next to the
CSV outputs; nothing here ever opens a window.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def read_loss_log(path: str | Path) -> dict[str, np.ndarray]:
    """Load the training CSV into column arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {
        key: np.array([float(r[key]) for r in rows]) for key in rows[0].keys()
    }


def render_loss_curves(log_path: str | Path, out_path: str | Path) -> None:
    """Two-panel figure: objective terms and prototype similarities."""
    cols = read_loss_log(log_path)
    fig, (ax_loss, ax_cos) = plt.subplots(1, 2, figsize=(10, 4))
    if cols:
        x = cols["episode"]
        ax_loss.plot(x, cols["l_tot"], label="total", lw=1.2)
        ax_loss.plot(x, cols["l_iou"], label="overlap", lw=1.0)
        ax_loss.plot(x, cols["l_sc"], label="self-contrast", lw=1.0, alpha=0.7)
        ax_cos.plot(x, cols["cos_c"], label="foreground sim", lw=1.0)
        ax_cos.plot(x, cols["cos_b"], label="background sim", lw=1.0)
    ax_loss.set_xlabel("episode")
    ax_loss.set_ylabel("loss")
    ax_loss.set_title("training objective")
    ax_loss.legend()
    ax_cos.set_xlabel("episode")
    ax_cos.set_ylabel("similarity")
    ax_cos.set_ylim(-0.05, 1.05)
    ax_cos.set_title("prototype similarities")
    ax_cos.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def render_metric_summary(
    per_image: list[tuple[str, float, float]],
    precision_curves: list[np.ndarray],
    recall_curves: list[np.ndarray],
    out_path: str | Path,
) -> None:
    """Histogram of per-image scores plus the mean precision/recall sweep."""
    fig, (ax_hist, ax_pr) = plt.subplots(1, 2, figsize=(10, 4))
    if per_image:
        maes = [row[1] for row in per_image]
        fmaxes = [row[2] for row in per_image]
        bins = np.linspace(0.0, 1.0, 21)
        ax_hist.hist(maes, bins=bins, alpha=0.6, label="mae")
        ax_hist.hist(fmaxes, bins=bins, alpha=0.6, label="max F-measure")
    ax_hist.set_xlabel("score")
    ax_hist.set_ylabel("images")
    ax_hist.set_title("per-image metric distribution")
    ax_hist.legend()
    if precision_curves:
        precision = np.mean(np.stack(precision_curves), axis=0)
        recall = np.mean(np.stack(recall_curves), axis=0)
        order = np.argsort(recall)
        ax_pr.plot(recall[order], precision[order], lw=1.4)
    ax_pr.set_xlabel("recall")
    ax_pr.set_ylabel("precision")
    ax_pr.set_xlim(-0.02, 1.02)
    ax_pr.set_ylim(-0.02, 1.02)
    ax_pr.set_title("mean precision vs recall over thresholds")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
