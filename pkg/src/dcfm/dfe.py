"""Depth feature enhancement with rank-amplified attention.

The mined response maps and prototype first gate the residual features
(fuse); each image then runs an independent self-attention pass where the
row-softmaxed attention is multiplied by (rank + 1) ** alpha for strictly
positive raw scores and by 1 elsewhere.  Amplified rows are deliberately
left unnormalized.  Ranks and the positivity indicator are constants to
the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import uniform_init
from .dpg import ResponseMaps
from .tensor import Tensor


@dataclass
class DfeParams:
    conv_w: Tensor
    conv_b: Tensor
    key_w: Tensor
    key_b: Tensor
    query_w: Tensor
    query_b: Tensor
    value_w: Tensor
    value_b: Tensor

    def named(self, prefix: str = "dfe") -> dict:
        return {
            f"{prefix}.conv.w": self.conv_w,
            f"{prefix}.conv.b": self.conv_b,
            f"{prefix}.key.w": self.key_w,
            f"{prefix}.key.b": self.key_b,
            f"{prefix}.query.w": self.query_w,
            f"{prefix}.query.b": self.query_b,
            f"{prefix}.value.w": self.value_w,
            f"{prefix}.value.b": self.value_b,
        }


def init_dfe_params(channels: int, rng: np.random.Generator) -> DfeParams:
    return DfeParams(
        conv_w=uniform_init(rng, (channels, channels), channels),
        conv_b=uniform_init(rng, (channels,), channels),
        key_w=uniform_init(rng, (channels, channels), channels),
        key_b=uniform_init(rng, (channels,), channels),
        query_w=uniform_init(rng, (channels, channels), channels),
        query_b=uniform_init(rng, (channels,), channels),
        value_w=uniform_init(rng, (channels, channels), channels),
        value_b=uniform_init(rng, (channels,), channels),
    )


@dataclass
class AttentionBundle:
    """Everything the attention row rework produces for one image."""

    raw: Tensor  # [HW, HW] key-query scores, unscaled
    normalized: Tensor  # row softmax of raw
    ranks: np.ndarray  # [HW, HW] per-row descending ranks of raw
    weights: np.ndarray  # (rank + 1) ** alpha where raw > 0, else 1
    final: Tensor  # normalized * weights (not re-normalized)


def fuse(f_res: Tensor, maps: ResponseMaps, proto: Tensor) -> Tensor:
    """Gate features by their response map and by the prototype.

    fused = f_res * final_map (broadcast over channels)
          + f_res * proto     (broadcast over images and positions)
    """
    n, c, h, w = f_res.shape
    map_term = f_res * maps.final.reshape(n, 1, h, w)
    proto_term = f_res * proto.reshape(1, c, 1, 1)
    return map_term + proto_term


def rank_amplification(raw_scores: np.ndarray, alpha: float) -> tuple:
    """Rank rows of raw attention and build amplification weights.

    Returns (ranks, weights): weights are (rank + 1) ** alpha wherever the
    raw score is strictly positive and exactly 1 elsewhere.
    """
    ranks = T.descending_rank(raw_scores).data
    weights = np.where(raw_scores > 0.0, (ranks + 1.0) ** alpha, 1.0)
    return ranks, weights


def readjust(normalized: Tensor, raw: Tensor, alpha: float, frozen=None) -> tuple:
    """Apply rank amplification to a softmaxed attention matrix.

    ``frozen`` optionally replays (ranks, weights) recorded earlier so the
    map stays smooth under finite differences.
    """
    if frozen is not None:
        ranks, weights = frozen
    else:
        ranks, weights = rank_amplification(raw.data, alpha)
    return ranks, weights, normalized * Tensor(weights)


def democratic_attention(fused_image: Tensor, params: DfeParams, alpha: float,
                         frozen=None) -> AttentionBundle:
    """Rank-amplified attention for a single image's fused features [C, H, W]."""
    c, h, w = fused_image.shape
    batched = fused_image.reshape(1, c, h, w)
    f_conv = T.relu(T.pointwise_conv(batched, params.conv_w, params.conv_b))
    bundle, _, _ = _attend(f_conv, params, alpha, frozen)
    return bundle


def _attend(f_conv_image: Tensor, params: DfeParams, alpha: float, frozen=None):
    """Shared core: f_conv [1, C, H, W] -> (bundle, f_conv_rows, value_rows)."""
    _, c, h, w = f_conv_image.shape
    rows = lambda t: t.reshape(c, h * w).t()  # [HW, C]
    f_key = rows(T.pointwise_conv(f_conv_image, params.key_w, params.key_b))
    f_query = rows(T.pointwise_conv(f_conv_image, params.query_w, params.query_b))
    f_value = rows(T.pointwise_conv(f_conv_image, params.value_w, params.value_b))
    raw = T.matmul(f_key, f_query.t())
    normalized = T.softmax_rows(raw)
    ranks, weights, final = readjust(normalized, raw, alpha, frozen)
    bundle = AttentionBundle(raw=raw, normalized=normalized, ranks=ranks,
                             weights=weights, final=final)
    return bundle, rows(f_conv_image), f_value


def apply_attention(f_conv_rows: Tensor, value_rows: Tensor, final: Tensor,
                    height: int, width: int) -> Tensor:
    """Residual attention mix: f_conv + final @ values, back to [C, H, W]."""
    mixed = T.matmul(final, value_rows)
    return (f_conv_rows + mixed).t().reshape(-1, height, width)


def enhance(fused: Tensor, params: DfeParams, alpha: float, decisions=None,
            use_readjust: bool = True) -> Tensor:
    """Enhance every image of the fused group independently: [N, C, H, W].

    ``decisions`` optionally records/replays the per-image rank matrices
    and positivity indicators under keys "dfe.<n>".
    """
    n, c, h, w = fused.shape
    f_conv = T.relu(T.pointwise_conv(fused, params.conv_w, params.conv_b))
    outputs = []
    for img in range(n):
        one = T.index0(f_conv, img).reshape(1, c, h, w)
        frozen = decisions.get(f"dfe.{img}") if decisions is not None else None
        bundle, conv_rows, value_rows = _attend(one, params, alpha, frozen)
        if decisions is not None and frozen is None:
            decisions[f"dfe.{img}"] = (bundle.ranks, bundle.weights)
        applied = bundle.final if use_readjust else bundle.normalized
        outputs.append(apply_attention(conv_rows, value_rows, applied, h, w))
    return T.stack(outputs)
