"""Built-in verification: oracle comparisons and gradient checks.

Each suite re-derives expected values with plain-loop reference code and
compares against the library's vectorized implementations, then prints
one pass/fail line.  Intended for quick health checks of an install
(``dcfm --mode selftest``); the full test suite lives under tests/.
"""

from __future__ import annotations

import numpy as np

from . import datagen, dfe, dpg, losses, metrics, oracles
from . import tensor as T
from .backbone import EncoderConfig
from .model import CoSalModel, DecisionCache, ModelConfig
from .tensor import Tensor


def _suite_tensor_ops(rng) -> None:
    a = rng.standard_normal((4, 5))
    b = rng.standard_normal((5, 3))
    got = (Tensor(a) @ Tensor(b)).data
    np.testing.assert_allclose(got, oracles.matmul_loops(a, b), atol=1e-12)

    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    bias = rng.standard_normal(4)
    got = T.conv3x3(Tensor(x), Tensor(w), Tensor(bias), stride=2).data
    np.testing.assert_allclose(got, oracles.conv3x3_loops(x, w, bias, 2), atol=1e-11)

    rows = rng.standard_normal((5, 7))
    got = T.softmax_rows(Tensor(rows)).data
    want = np.stack([oracles.softmax_row_loops(row) for row in rows])
    np.testing.assert_allclose(got, want, atol=1e-12)
    ranks = T.descending_rank(Tensor(rows)).data
    want = np.stack([oracles.descending_rank_row_loops(row) for row in rows])
    np.testing.assert_array_equal(ranks, want)


def _random_dpg_params(rng, c: int) -> dpg.DpgParams:
    def t(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    return dpg.DpgParams(
        res_w=t(c, c), res_b=t(c), key_w=t(c, c), key_b=t(c),
        query_w=t(c, c), query_b=t(c),
    )


def _suite_seed_election(rng) -> None:
    for _ in range(10):
        n = int(rng.integers(2, 5))
        c = int(rng.integers(2, 7))
        h = int(rng.integers(2, 4))
        w = int(rng.integers(2, 4))
        f_res = rng.standard_normal((n, c, h, w))
        params = _random_dpg_params(rng, c)
        seeds = dpg.seed_select(Tensor(f_res), params)
        _, want_idx, want_vec = oracles.seed_select_loops(
            f_res, params.key_w.data, params.key_b.data,
            params.query_w.data, params.query_b.data,
        )
        if list(seeds.indices) != list(want_idx):
            raise AssertionError(f"elected {seeds.indices}, oracle {want_idx}")
        np.testing.assert_array_equal(seeds.vectors.data, want_vec)


def _suite_response_and_prototype(rng) -> None:
    for _ in range(10):
        n, c, h, w = 3, 5, 3, 4
        f_res = rng.standard_normal((n, c, h, w))
        vectors = rng.standard_normal((n, c))
        seeds = dpg.SeedSet(indices=[(k, 0, 0) for k in range(n)],
                            vectors=Tensor(vectors),
                            consensus=np.zeros(n * h * w))
        maps = dpg.democratic_response(Tensor(f_res), seeds)
        _, want_final = oracles.response_maps_loops(f_res, vectors)
        np.testing.assert_allclose(maps.final.data, want_final, atol=1e-12)
        if maps.final.data.min() < -1.0 or maps.final.data.max() > 1.0:
            raise AssertionError("response values escaped [-1, 1]")
        proto = dpg.build_prototype(Tensor(f_res), maps)
        np.testing.assert_allclose(
            proto.data, oracles.prototype_loops(f_res, maps.final.data), atol=1e-12
        )


def _suite_attention(rng) -> None:
    params = dfe.init_dfe_params(4, rng)
    fused = rng.standard_normal((2, 4, 3, 3))
    decisions = DecisionCache()
    enhanced = dfe.enhance(Tensor(fused), params, alpha=3.0, decisions=decisions)
    want, per_image = oracles.enhance_loops(
        fused,
        params.conv_w.data, params.conv_b.data,
        params.key_w.data, params.key_b.data,
        params.query_w.data, params.query_b.data,
        params.value_w.data, params.value_b.data,
        alpha=3.0,
    )
    np.testing.assert_allclose(enhanced.data, want, atol=1e-10)
    for img, info in enumerate(per_image):
        _, weights = decisions[f"dfe.{img}"]
        if not np.all(weights[info["raw"] <= 0] == 1.0):
            raise AssertionError("non-positive attention must keep weight 1")


def _suite_gradients(rng) -> None:
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)

    def through_ops(t: Tensor) -> Tensor:
        soft = T.softmax_rows(t)
        return (soft * soft).sum() + t.relu().mean() + t.sigmoid().sum()

    err = T.grad_check(through_ops, x)
    if err >= 1e-5:
        raise AssertionError(f"op chain gradient error {err:.2e}")

    tiny = ModelConfig(encoder=EncoderConfig(stages=((4, 2), (4, 2))), seed=3)
    model = CoSalModel(tiny)
    images = Tensor(rng.random((2, 3, 8, 8)), requires_grad=True)
    masks = (rng.random((2, 1, 8, 8)) > 0.6).astype(float)
    decisions = DecisionCache()
    model.loss(images, masks, weight=0.1, decisions=decisions)

    def loss_of(t: Tensor) -> Tensor:
        total, _ = model.loss(t, masks, weight=0.1, decisions=dict(decisions))
        return total

    err = T.grad_check(loss_of, images, h=1e-5)
    if err >= 1e-4:
        raise AssertionError(f"objective gradient error {err:.2e}")


def _suite_contrast_identities(rng) -> None:
    from . import scl

    c = 5
    params = _random_dpg_params(rng, c)
    params.res_b.data[:] = 0.0
    params.key_b.data[:] = 0.0
    params.query_b.data[:] = 0.0
    f_ext = Tensor(rng.standard_normal((2, c, 4, 4)))
    proto = dpg.run_dpg(f_ext, params).proto
    ones = np.ones((2, 1, 4, 4))
    pair = scl.erase_and_prototype(f_ext, ones, params)
    if not np.array_equal(pair.proto_c.data, proto.data):
        raise AssertionError("all-foreground mask must reproduce the prototype")
    masks = (rng.random((2, 1, 4, 4)) > 0.5).astype(float)
    pair = scl.erase_and_prototype(f_ext, masks, params)
    swapped = scl.erase_and_prototype(f_ext, 1.0 - masks, params)
    if not (
        np.array_equal(pair.proto_c.data, swapped.proto_b.data)
        and np.array_equal(pair.proto_b.data, swapped.proto_c.data)
    ):
        raise AssertionError("inverting the mask must swap the prototype pair")


def _suite_metrics(rng) -> None:
    for _ in range(10):
        pred = rng.random((6, 6))
        gt = (rng.random((6, 6)) > 0.5).astype(float)
        gt[0, 0] = 1.0
        got, _, _ = metrics.f_beta_max(pred, gt)
        want, _, _ = oracles.f_beta_max_loops(pred, gt)
        if abs(got - want) > 1e-12:
            raise AssertionError(f"f_beta_max {got} vs oracle {want}")
        if abs(metrics.mae(pred, gt) - oracles.mae_loops(pred, gt)) > 1e-12:
            raise AssertionError("mae disagrees with oracle")
    score = losses.iou_loss(Tensor(np.ones((1, 1, 2, 2))), np.ones((1, 1, 2, 2)))
    if score.item() != 0.0:
        raise AssertionError("perfect prediction must have zero overlap loss")


def _suite_data_roundtrip(rng) -> None:
    import tempfile

    cfg = datagen.GenConfig(group_size=2, image_size=16)
    group = datagen.generate_group(cfg, "ring", 77)
    for n in range(2):
        mask = group.masks[n, 0]
        want = oracles.rasterize_mask_loops(
            "ring", group.targets[n].cx, group.targets[n].cy,
            group.targets[n].size, 16, 16,
        )
        np.testing.assert_array_equal(mask, want)
    with tempfile.TemporaryDirectory() as root:
        datagen.write_group(root, group)
        _, images, masks = datagen.load_group_images(f"{root}/{group.group_id}")
        np.testing.assert_array_equal(masks, group.masks)
        if np.abs(images - group.images).max() > 0.5 / 255:
            raise AssertionError("image roundtrip exceeded quantization error")


SUITES = (
    ("tensor-ops-vs-oracles", _suite_tensor_ops),
    ("seed-election-vs-oracle", _suite_seed_election),
    ("response-prototype-vs-oracle", _suite_response_and_prototype),
    ("attention-vs-oracle", _suite_attention),
    ("gradient-checks", _suite_gradients),
    ("contrast-identities", _suite_contrast_identities),
    ("metrics-vs-oracle", _suite_metrics),
    ("data-roundtrip", _suite_data_roundtrip),
)


def run_selftest(log=print, seed: int = 0) -> bool:
    """Run every suite; print one line each; True iff all passed."""
    import zlib

    all_ok = True
    for name, suite in SUITES:
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        try:
            suite(rng)
        except Exception as exc:  # noqa: BLE001 - report any failure, keep going
            all_ok = False
            log(f"FAIL {name}: {exc}")
        else:
            log(f"pass {name}")
    return all_ok
