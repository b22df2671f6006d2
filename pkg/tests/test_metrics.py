"""Tests for evaluation metrics."""

import numpy as np
import pytest

from dcfm import metrics, oracles
from dcfm.metrics import UndefinedMetricError, evaluate_pair, f_beta_max, mae


@pytest.fixture
def rng():
    return np.random.default_rng(60221)


class TestMae:
    def test_identical_arrays(self, rng):
        pred = rng.random((8, 8))
        assert mae(pred, pred.copy()) == 0.0

    def test_complement_of_binary_mask(self, rng):
        gt = (rng.random((8, 8)) > 0.5).astype(np.float64)
        assert mae(1.0 - gt, gt) == 1.0

    def test_matches_loop_oracle(self, rng):
        pred = rng.random((6, 7))
        gt = rng.random((6, 7))
        assert mae(pred, gt) == pytest.approx(oracles.mae_loops(pred, gt), abs=1e-15)

    def test_extent_mismatch_rejected(self):
        with pytest.raises(ValueError, match="extent"):
            mae(np.zeros((2, 2)), np.zeros((3, 3)))


class TestQuantize:
    def test_rounds_half_up(self):
        got = metrics.quantize_8bit(np.array([0.0, 0.5 / 255, 1.5 / 255, 1.0]))
        assert np.array_equal(got, [0, 1, 2, 255])

    def test_clips_out_of_range(self):
        got = metrics.quantize_8bit(np.array([-0.1, 1.1]))
        assert np.array_equal(got, [0, 255])


class TestFBetaMax:
    def test_perfect_binary_prediction_scores_one(self, rng):
        gt = (rng.random((10, 10)) > 0.5).astype(np.float64)
        gt[0, 0] = 1.0
        fmax, _, _ = f_beta_max(gt.copy(), gt)
        assert fmax == 1.0

    def test_all_zero_prediction_scores_zero(self, rng):
        gt = (rng.random((10, 10)) > 0.5).astype(np.float64)
        gt[0, 0] = 1.0
        fmax, precision, recall = f_beta_max(np.zeros((10, 10)), gt)
        assert fmax == 0.0
        assert precision.sum() == 0.0 and recall.sum() == 0.0

    def test_empty_ground_truth_is_undefined(self, rng):
        with pytest.raises(UndefinedMetricError):
            f_beta_max(rng.random((4, 4)), np.zeros((4, 4)))

    def test_four_pixel_example_against_oracle(self):
        pred = np.array([[0.9, 0.4], [0.6, 0.1]])
        gt = np.array([[1.0, 0.0], [1.0, 0.0]])
        fmax, precision, recall = f_beta_max(pred, gt)
        want, want_p, want_r = oracles.f_beta_max_loops(pred, gt)
        assert fmax == pytest.approx(want, abs=1e-15)
        np.testing.assert_allclose(precision, want_p, atol=1e-15)
        np.testing.assert_allclose(recall, want_r, atol=1e-15)
        # best threshold keeps the two true pixels only: P = R = 1
        assert fmax == 1.0

    def test_random_pairs_match_exhaustive_oracle(self, rng):
        for _ in range(25):
            pred = rng.random((6, 6))
            gt = (rng.random((6, 6)) > 0.4).astype(np.float64)
            if gt.sum() == 0:
                gt[0, 0] = 1.0
            fmax, precision, recall = f_beta_max(pred, gt)
            want, want_p, want_r = oracles.f_beta_max_loops(pred, gt)
            assert fmax == pytest.approx(want, abs=1e-12)
            np.testing.assert_allclose(precision, want_p, atol=1e-12)
            np.testing.assert_allclose(recall, want_r, atol=1e-12)

    def test_monotone_level_relabeling_preserves_fmax(self, rng):
        """Any strictly increasing remap of the 256 levels leaves F-max
        unchanged, because the same binarizations stay reachable."""
        pred = rng.random((8, 8))
        gt = (rng.random((8, 8)) > 0.5).astype(np.float64)
        gt[0, 0] = 1.0
        lut = np.sort(rng.choice(256, size=256, replace=False))  # strictly increasing
        relabeled = lut[metrics.quantize_8bit(pred)] / 255.0
        a, _, _ = f_beta_max(pred, gt)
        b, _, _ = f_beta_max(relabeled, gt)
        assert a == pytest.approx(b, abs=1e-12)

    def test_curves_have_256_entries(self, rng):
        gt = np.ones((4, 4))
        _, precision, recall = f_beta_max(rng.random((4, 4)), gt)
        assert precision.shape == (256,) and recall.shape == (256,)


class TestReport:
    def test_evaluate_pair_bundles_both_metrics(self, rng):
        pred = rng.random((8, 8))
        gt = (rng.random((8, 8)) > 0.5).astype(np.float64)
        gt[0, 0] = 1.0
        report = evaluate_pair(pred, gt)
        assert report.mae == mae(pred, gt)
        assert report.f_beta_max == f_beta_max(pred, gt)[0]

    def test_csv_layout(self, tmp_path):
        path = tmp_path / "metrics.csv"
        metrics.write_report_csv(path, [("g/00", 0.125, 0.5)], 0.125, 0.5)
        lines = path.read_text().splitlines()
        assert lines[0] == "image,mae,fmax"
        assert lines[1] == "g/00,0.125000,0.500000"
        assert lines[2] == "mean,0.125000,0.500000"
