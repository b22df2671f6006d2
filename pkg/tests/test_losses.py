"""Tests for the soft IoU objective and its combination with self-contrast."""

import numpy as np
import pytest

from dcfm import oracles
from dcfm import tensor as T
from dcfm.losses import iou_loss, total_loss
from dcfm.tensor import ShapeError, Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1331)


class TestIouLoss:
    def test_perfect_prediction_costs_nothing(self, rng):
        gt = (rng.random((3, 1, 6, 6)) > 0.5).astype(np.float64)
        assert iou_loss(Tensor(gt.copy()), gt).item() == pytest.approx(0.0, abs=1e-12)

    def test_disjoint_binary_masks_cost_one(self):
        pred = np.zeros((1, 1, 2, 2))
        pred[0, 0, 0, 0] = 1.0
        gt = np.zeros((1, 1, 2, 2))
        gt[0, 0, 1, 1] = 1.0
        assert iou_loss(Tensor(pred), gt).item() == pytest.approx(1.0, abs=1e-7)

    def test_half_confidence_on_true_mask(self, rng):
        """pred = 0.5 * gt gives inter = 0.5|Y| and union = |Y|, so loss 0.5."""
        gt = (rng.random((4, 1, 8, 8)) > 0.6).astype(np.float64)
        gt[:, :, 0, 0] = 1.0  # keep every image non-empty
        loss = iou_loss(Tensor(0.5 * gt), gt)
        assert loss.item() == pytest.approx(0.5, abs=1e-8)

    def test_both_empty_costs_nothing(self):
        zeros = np.zeros((2, 1, 4, 4))
        assert iou_loss(Tensor(zeros.copy()), zeros).item() == 0.0

    def test_range_is_zero_to_one(self, rng):
        for _ in range(10):
            pred = rng.random((2, 1, 5, 5))
            gt = (rng.random((2, 1, 5, 5)) > 0.5).astype(np.float64)
            val = iou_loss(Tensor(pred), gt).item()
            assert 0.0 <= val <= 1.0

    def test_matches_loop_oracle(self, rng):
        pred = rng.random((3, 1, 4, 4))
        gt = (rng.random((3, 1, 4, 4)) > 0.5).astype(np.float64)
        got = iou_loss(Tensor(pred), gt).item()
        assert got == pytest.approx(oracles.iou_loss_loops(pred, gt), abs=1e-12)

    def test_moving_toward_target_lowers_loss(self, rng):
        gt = (rng.random((2, 1, 6, 6)) > 0.5).astype(np.float64)
        far = np.clip(0.9 - 0.8 * gt, 0.05, 0.95)  # mostly wrong
        near = np.clip(0.1 + 0.8 * gt, 0.05, 0.95)  # mostly right
        assert iou_loss(Tensor(near), gt).item() < iou_loss(Tensor(far), gt).item()

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            iou_loss(Tensor(np.zeros((1, 1, 4, 4))), np.zeros((1, 1, 2, 2)))

    def test_gradcheck(self, rng):
        gt = (rng.random((2, 1, 3, 3)) > 0.5).astype(np.float64)
        pred = Tensor(rng.uniform(0.1, 0.9, (2, 1, 3, 3)), requires_grad=True)
        assert T.grad_check(lambda t: iou_loss(t, gt), pred) < 1e-5


class TestTotalLoss:
    def test_weighted_sum(self):
        iou = Tensor(0.4)
        sc = Tensor(1.2)
        assert total_loss(iou, sc, 0.1).item() == pytest.approx(0.52, abs=1e-12)

    def test_zero_weight_drops_contrast_term(self):
        assert total_loss(Tensor(0.4), Tensor(5.0), 0.0).item() == pytest.approx(0.4)

    def test_gradient_reaches_both_terms(self):
        iou = Tensor(0.4, requires_grad=True)
        sc = Tensor(1.2, requires_grad=True)
        total_loss(iou, sc, 0.1).backward()
        assert iou.grad == pytest.approx(1.0)
        assert sc.grad == pytest.approx(0.1)
