"""Evaluation metrics: mean absolute error and max F score over thresholds.

Predictions are quantized to 8-bit levels before thresholding so results
are bit-exact across runs and platforms.  A pixel counts as positive at
threshold t when its quantized level is strictly greater than t; sweeping
t over 0..255 therefore maps an all-zero prediction to F = 0 at every
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BETA_SQ = 0.3  # precision-leaning F weight
THRESHOLDS = 256


class UndefinedMetricError(ValueError):
    """Raised when a metric has no defined value (empty ground truth)."""


def _check_pair(pred: np.ndarray, gt: np.ndarray):
    if pred.shape != gt.shape:
        raise ValueError(f"extent mismatch: prediction {pred.shape} vs truth {gt.shape}")


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute difference over all pixels."""
    _check_pair(pred, gt)
    return float(np.abs(pred.astype(np.float64) - gt.astype(np.float64)).mean())


def quantize_8bit(pred: np.ndarray) -> np.ndarray:
    """Round half up from [0, 1] to integer levels 0..255."""
    return np.clip(np.floor(pred * 255.0 + 0.5), 0, 255).astype(np.int64)


@dataclass
class MetricReport:
    mae: float
    f_beta_max: float
    precision: np.ndarray  # [256] per-threshold precision
    recall: np.ndarray  # [256] per-threshold recall


def f_beta_max(pred: np.ndarray, gt: np.ndarray, beta_sq: float = BETA_SQ):
    """Max F over 256 thresholds; returns (fmax, precision, recall).

    Counting is exact: per-level histograms of the quantized prediction
    are cumulated from the top, so every threshold sees integer TP/FP/FN.
    Precision, recall, and F all define 0/0 as 0.
    """
    _check_pair(pred, gt)
    positive = gt > 0.5
    npos = int(positive.sum())
    if npos == 0:
        raise UndefinedMetricError("ground truth has no positive pixels")
    levels = quantize_8bit(pred)
    hist_pos = np.bincount(levels[positive].ravel(), minlength=256)
    hist_all = np.bincount(levels.ravel(), minlength=256)
    # above[t] = number of pixels with level strictly greater than t
    above_pos = np.concatenate([np.cumsum(hist_pos[::-1])[::-1][1:], [0]])
    above_all = np.concatenate([np.cumsum(hist_all[::-1])[::-1][1:], [0]])
    tp = above_pos.astype(np.float64)
    predicted = above_all.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = tp / npos
        denom = beta_sq * precision + recall
        f = np.where(denom > 0, (1.0 + beta_sq) * precision * recall / denom, 0.0)
    return float(f.max()), precision, recall


def evaluate_pair(pred: np.ndarray, gt: np.ndarray) -> MetricReport:
    fmax, precision, recall = f_beta_max(pred, gt)
    return MetricReport(mae=mae(pred, gt), f_beta_max=fmax,
                        precision=precision, recall=recall)


def write_report_csv(path, rows, mean_mae: float, mean_fmax: float) -> None:
    """Emit per-image metrics as ``image,mae,fmax`` plus a summary line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("image,mae,fmax\n")
        for name, image_mae, image_fmax in rows:
            fh.write(f"{name},{image_mae:.6f},{image_fmax:.6f}\n")
        fh.write(f"mean,{mean_mae:.6f},{mean_fmax:.6f}\n")
