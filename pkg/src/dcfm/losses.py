"""Training objectives: soft IoU plus weighted self-contrast."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

IOU_EPS = 1e-8  # keeps the ratio defined (and 1) when both masks are empty


def iou_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """1 - mean over images of soft intersection-over-union.

    Per image: inter = sum(pred * gt); union = sum(pred) + sum(gt) - inter;
    score = (inter + eps) / (union + eps).  The shared epsilon keeps an
    all-empty image at score 1, so its loss contribution is 0.
    """
    if pred.shape != gt.shape:
        raise T.ShapeError(f"iou_loss: prediction {pred.shape} vs target {gt.shape}")
    target = Tensor(gt)
    axes = tuple(range(1, pred.ndim))
    inter = (pred * target).sum(axis=axes)
    union = pred.sum(axis=axes) + target.sum(axis=axes) - inter
    scores = (inter + IOU_EPS) / (union + IOU_EPS)
    return 1.0 - scores.mean()


@dataclass
class LossReport:
    """Scalar views of one training step, ready for the episode log."""

    l_iou: float
    l_sc: float
    cos_c: float
    cos_b: float
    l_tot: float


def total_loss(iou: Tensor, sc: Tensor, weight: float) -> Tensor:
    """Weighted sum of the segmentation and self-contrast objectives."""
    return iou + weight * sc
