"""Democratic prototype generation.

Given extractor features for a whole group of images, this stage

  1. adds a learned residual pointwise projection (residual_features),
  2. elects one seed pixel per image by cross-image consensus: a pixel's
     score is the mean, over every image in the group, of its best
     key/query similarity into that image (seed_select),
  3. correlates unit-normalized features against every unit-normalized
     seed and averages the per-seed maps (democratic_response),
  4. condenses a single group prototype as the response-weighted mean
     feature over all pixels of all images (build_prototype).

Seed indices are discrete: gradients flow through the gathered seed
values and the response maps, never through the election itself, so the
consensus scores are computed outside the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import uniform_init
from .tensor import Tensor


@dataclass
class DpgParams:
    """Learned projections: residual map plus seed key/query heads."""

    res_w: Tensor
    res_b: Tensor
    key_w: Tensor
    key_b: Tensor
    query_w: Tensor
    query_b: Tensor

    def named(self, prefix: str = "dpg") -> dict:
        return {
            f"{prefix}.res.w": self.res_w,
            f"{prefix}.res.b": self.res_b,
            f"{prefix}.key.w": self.key_w,
            f"{prefix}.key.b": self.key_b,
            f"{prefix}.query.w": self.query_w,
            f"{prefix}.query.b": self.query_b,
        }


def init_dpg_params(channels: int, rng: np.random.Generator) -> DpgParams:
    return DpgParams(
        res_w=uniform_init(rng, (channels, channels), channels),
        res_b=uniform_init(rng, (channels,), channels),
        key_w=uniform_init(rng, (channels, channels), channels),
        key_b=uniform_init(rng, (channels,), channels),
        query_w=uniform_init(rng, (channels, channels), channels),
        query_b=uniform_init(rng, (channels,), channels),
    )


@dataclass
class SeedSet:
    """One elected seed per image: where it sits and what it looks like."""

    indices: list  # [(n, h, w)] in image order
    vectors: Tensor  # [N, C], rows gathered from the residual features
    consensus: np.ndarray  # [N*H*W] mean-of-max similarity per pixel


@dataclass
class ResponseMaps:
    per_seed: Tensor  # [N, M, H, W] cosine of features against each seed
    final: Tensor  # [N, H, W] mean over seeds


@dataclass
class DpgResult:
    f_res: Tensor
    seeds: SeedSet
    maps: ResponseMaps
    proto: Tensor  # [1, C]


def residual_features(f_ext: Tensor, params: DpgParams) -> Tensor:
    """f_ext plus a learned pointwise projection of itself."""
    return f_ext + T.pointwise_conv(f_ext, params.res_w, params.res_b)


def seed_select(f_res: Tensor, params: DpgParams, frozen_indices=None) -> SeedSet:
    """Elect the most group-consistent pixel of each image.

    Keys and queries are separate learned pointwise projections of the
    residual features.  For pixel p, the consensus score is the mean over
    images n of max_q S[p, q] restricted to pixels q of image n, where
    S = K Q^T (no scaling, no softmax).  Each image contributes the pixel
    with the highest consensus; ties break toward the lower flat index.

    ``frozen_indices`` replays a previously recorded election, which keeps
    the function smooth for finite-difference checks.
    """
    n, c, h, w = f_res.shape
    if frozen_indices is not None:
        indices = list(frozen_indices)
        consensus = None
    else:
        data = f_res.data
        keys = np.einsum("oc,nchw->nohw", params.key_w.data, data, optimize=True) + \
            params.key_b.data[None, :, None, None]
        queries = np.einsum("oc,nchw->nohw", params.query_w.data, data, optimize=True) + \
            params.query_b.data[None, :, None, None]
        k_flat = keys.transpose(0, 2, 3, 1).reshape(n * h * w, -1)
        q_flat = queries.transpose(0, 2, 3, 1).reshape(n * h * w, -1)
        sim = k_flat @ q_flat.T  # [NHW, NHW]
        per_image_max = sim.reshape(n * h * w, n, h * w).max(axis=2)
        consensus = per_image_max.mean(axis=1)
        flat_best = consensus.reshape(n, h * w).argmax(axis=1)  # first max wins ties
        indices = [(img, int(f) // w, int(f) % w) for img, f in enumerate(flat_best)]
    vectors = T.gather_pixels(f_res, indices)
    return SeedSet(indices=indices, vectors=vectors, consensus=consensus)


def democratic_response(f_res: Tensor, seeds: SeedSet) -> ResponseMaps:
    """Correlate unit features with unit seeds and average over seeds.

    Values are cosines of unit vectors, clamped to [-1, 1] to shed float
    noise (the clamp passes gradients through unchanged).
    """
    f_hat = T.l2_normalize(f_res, axis=1)
    d_hat = T.l2_normalize(seeds.vectors, axis=1)
    per_seed = T.clamp_passthrough(T.einsum2("nchw,mc->nmhw", f_hat, d_hat), -1.0, 1.0)
    final = per_seed.mean(axis=1)
    return ResponseMaps(per_seed=per_seed, final=final)


def build_prototype(f_res: Tensor, maps: ResponseMaps) -> Tensor:
    """Response-weighted mean feature across the whole group: [1, C]."""
    n, _, h, w = f_res.shape
    weighted = T.einsum2("nhw,nchw->c", maps.final, f_res)
    return (weighted * (1.0 / (n * h * w))).reshape(1, -1)


def run_dpg(f_ext: Tensor, params: DpgParams, decisions=None, key: str = "dpg") -> DpgResult:
    """Full prototype-generation pass over one group's features.

    ``decisions`` is an optional mutable mapping; when given, the seed
    election for ``key`` is recorded on first use and replayed afterwards.
    """
    f_res = residual_features(f_ext, params)
    frozen = decisions.get(key) if decisions is not None else None
    seeds = seed_select(f_res, params, frozen_indices=frozen)
    if decisions is not None and frozen is None:
        decisions[key] = list(seeds.indices)
    maps = democratic_response(f_res, seeds)
    proto = build_prototype(f_res, maps)
    return DpgResult(f_res=f_res, seeds=seeds, maps=maps, proto=proto)


def response_map_to_gray(final_map: np.ndarray) -> np.ndarray:
    """Map response values linearly from [-1, 1] to [0, 1] for image dumps."""
    return np.clip((final_map + 1.0) * 0.5, 0.0, 1.0)
