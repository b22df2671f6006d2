"""Self-contrastive supervision on the group prototype.

During training the ground-truth masks are downscaled to feature
resolution and used to erase the extractor features two ways: keeping only
foreground, and keeping only background.  Running the *same* prototype
generator on both erased variants yields a foreground prototype and a
background prototype; the loss pulls the clean prototype toward the former
and away from the latter.  Inference never touches any of this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dpg import DpgParams, run_dpg
from .tensor import Tensor

SCL_EPS = 1e-5  # keeps both log terms finite at the similarity extremes


@dataclass
class MaskedPrototypePair:
    proto_c: Tensor  # prototype mined from foreground-only features
    proto_b: Tensor  # prototype mined from background-only features


@dataclass
class SclLoss:
    loss: Tensor  # scalar graph node
    cos_c: float  # similarity of proto and proto_c, in [0, 1]
    cos_b: float  # similarity of proto and proto_b, in [0, 1]


def downscale_mask(masks: np.ndarray, height: int, width: int) -> np.ndarray:
    """Area-average pooling of [N, 1, H, W] masks to feature resolution.

    The source extents must be integer multiples of the targets.  Output
    values live in [0, 1] and are exactly 0 or 1 wherever a whole pooling
    block is uniform.
    """
    n, c, src_h, src_w = masks.shape
    if src_h % height or src_w % width:
        raise T.ShapeError(
            f"mask extents {src_h}x{src_w} not divisible by target {height}x{width}"
        )
    fh, fw = src_h // height, src_w // width
    return masks.reshape(n, c, height, fh, width, fw).mean(axis=(3, 5))


def erase_and_prototype(f_ext: Tensor, masks: np.ndarray, params: DpgParams,
                        decisions=None) -> MaskedPrototypePair:
    """Mine prototypes from foreground-erased and background-erased features.

    Both passes reuse the exact parameter set of the main prototype pass;
    only the input features differ.
    """
    _, _, h, w = f_ext.shape
    down = downscale_mask(masks, h, w)
    fg = f_ext * Tensor(down)
    bg = f_ext * Tensor(1.0 - down)
    proto_c = run_dpg(fg, params, decisions, key="scl.fg").proto
    proto_b = run_dpg(bg, params, decisions, key="scl.bg").proto
    return MaskedPrototypePair(proto_c=proto_c, proto_b=proto_b)


def cosine_sim(p1: Tensor, p2: Tensor) -> Tensor:
    """Cosine similarity rescaled from [-1, 1] to [0, 1].

    Computes (1 + <p1, p2> / max(|p1| |p2|, 1e-12)) * 0.5 as one fused
    node; if either vector is numerically zero the similarity is 0.5 and
    the gradient stays finite.
    """
    a = p1.data.reshape(-1)
    b = p2.data.reshape(-1)
    if a.shape != b.shape:
        raise T.ShapeError(f"cosine_sim needs equal sizes, got {p1.shape} and {p2.shape}")
    dot = float(a @ b)
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    denom = max(na * nb, T.NORM_EPS)
    value = (1.0 + dot / denom) * 0.5
    out = T.custom_op(np.asarray(value), (p1, p2), None)

    def backward():
        g = float(out.grad)
        guarded = na * nb <= T.NORM_EPS
        if p1.requires_grad:
            if guarded:
                d_a = b / denom
            else:
                d_a = b / denom - dot * a / (denom * na * na)
            p1.grad += (0.5 * g * d_a).reshape(p1.shape)
        if p2.requires_grad:
            if guarded:
                d_b = a / denom
            else:
                d_b = a / denom - dot * b / (denom * nb * nb)
            p2.grad += (0.5 * g * d_b).reshape(p2.shape)

    out._backward = backward if out.requires_grad else None
    return out


def self_contrastive_loss(proto: Tensor, pair: MaskedPrototypePair,
                          eps: float = SCL_EPS) -> SclLoss:
    """-log(cos_c + eps) - log(1 - cos_b + eps).

    Decreasing in the foreground similarity, increasing in the background
    similarity; both logs stay finite at the extremes thanks to ``eps``.
    """
    cos_c = cosine_sim(proto, pair.proto_c)
    cos_b = cosine_sim(proto, pair.proto_b)
    loss = -T.log(cos_c + eps) - T.log(1.0 - cos_b + eps)
    return SclLoss(loss=loss, cos_c=cos_c.item(), cos_b=cos_b.item())
