"""End-to-end tests of the command-line interface and run artifacts."""

import os

import numpy as np
import pytest

from dcfm import cli, datagen
from dcfm.config import ConfigError, RunConfig, build_config, read_config_file
from dcfm.netpbm import read_netpbm, write_pgm
from dcfm.optim import Adam
from dcfm.tensor import Tensor


def run_cli(*args: str) -> int:
    return cli.main(list(args))


def tiny_train_args(out_dir, *extra):
    """One-epoch training at the smallest legal geometry, for speed."""
    return (
        "--mode", "train", "--epochs", "1", "--synthetic", "--seed", "7",
        "--group-size", "2", "--image-size", "16",
        "--out-dir", str(out_dir), *extra,
    )


class TestConfigFile:
    def test_empty_file_is_a_valid_run(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        cfg = build_config(read_config_file(path))
        assert cfg.mode == "train"
        assert cfg.epochs == 200
        assert cfg.group_size == 8
        assert cfg.image_size == 64

    def test_defaults_carry_stated_loss_constants(self):
        cfg = RunConfig().validate()
        assert cfg.alpha == 3.0
        assert cfg.contrast_weight == 0.1
        assert cfg.lr_extractor == 1e-5
        assert cfg.lr_other == 1e-4
        assert cfg.weight_decay == 1e-4

    def test_file_values_and_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment line\n"
            "epochs = 3\n"
            "lambda = 0.25   # trailing comment\n"
            "synthetic = false\n"
        )
        values = read_config_file(path)
        assert values == {"epochs": 3, "contrast_weight": 0.25, "synthetic": False}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("learning_rate = 1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            read_config_file(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "dup.cfg"
        path.write_text("epochs = 1\nepochs = 2\n")
        with pytest.raises(ConfigError, match="duplicate"):
            read_config_file(path)

    @pytest.mark.parametrize(
        "field,value",
        [
            ("alpha", 0.0),
            ("alpha", 4.5),
            ("contrast_weight", -0.1),
            ("group_size", 1),
            ("image_size", 24),
            ("epochs", 0),
            ("mode", "predict"),
        ],
    )
    def test_validation_rejects(self, field, value):
        with pytest.raises(ConfigError):
            build_config(overrides={field: value})


class TestOptimizer:
    def test_step_moves_against_gradient(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam({"g": ({"p": p}, 0.1)})
        p.grad = np.array([1.0, -1.0])
        opt.step()
        assert p.data[0] < 1.0 and p.data[1] > -2.0

    def test_none_grad_parameters_are_skipped(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        q = Tensor(np.array([5.0]), requires_grad=True)
        opt = Adam({"g": ({"p": p, "q": q}, 0.1)}, weight_decay=0.5)
        p.grad = np.array([1.0])
        opt.step()
        assert q.data[0] == 5.0  # untouched, not even decayed
        assert p.data[0] < 3.0

    def test_zero_grad_clears_all_groups(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        q = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"a": ({"p": p}, 0.1), "b": ({"q": q}, 0.2)})
        p.grad = np.array([1.0])
        q.grad = np.array([1.0])
        opt.zero_grad()
        assert p.grad is None and q.grad is None


class TestTrainMode:
    def test_smoke_run_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli(*tiny_train_args(out)) == 0
        assert (out / "model.ckpt").exists()
        log_lines = (out / "loss_log.csv").read_text().splitlines()
        assert log_lines[0] == "episode,l_iou,l_sc,cos_c,cos_b,l_tot"
        assert len(log_lines) >= 2
        assert (out / "loss_curves.png").exists()
        assert (out / "config_echo.txt").exists()
        assert (out / "val_groups").is_dir()

    def test_config_echo_records_stated_defaults(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli(*tiny_train_args(out)) == 0
        echo = (out / "config_echo.txt").read_text()
        assert "alpha = 3.0" in echo
        assert "lambda = 0.1" in echo

    def test_same_seed_gives_bit_identical_checkpoints(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(*tiny_train_args(a)) == 0
        assert run_cli(*tiny_train_args(b)) == 0
        assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()

    def test_nan_objective_raises_nan_error(self, tmp_path, monkeypatch):
        from dcfm import train as train_mod
        from dcfm.losses import LossReport

        real_loss = train_mod.CoSalModel.loss

        def poisoned_loss(self, images, masks, weight, **kwargs):
            total, _ = real_loss(self, images, masks, weight, **kwargs)
            bad = float("nan")
            return total, LossReport(l_iou=bad, l_sc=0.0, cos_c=0.0,
                                     cos_b=0.0, l_tot=bad)

        monkeypatch.setattr(train_mod.CoSalModel, "loss", poisoned_loss)
        cfg = RunConfig(out_dir=str(tmp_path / "run"), epochs=1,
                        group_size=2, image_size=16, seed=7).validate()
        with pytest.raises(train_mod.NanLossError):
            train_mod.run_training(cfg)

    def test_nan_loss_maps_to_runtime_exit(self, tmp_path, monkeypatch):
        from dcfm import cli as cli_mod
        from dcfm.train import NanLossError

        def exploding_run_training(cfg, **kwargs):
            raise NanLossError("episode 0: objective became nan")

        monkeypatch.setattr(cli_mod, "run_training", exploding_run_training)
        assert run_cli(*tiny_train_args(tmp_path / "run")) == 2

    def test_invalid_flag_value_is_usage_error(self, tmp_path):
        assert run_cli("--mode", "train", "--alpha", "9") == 1

    def test_unknown_mode_is_usage_error(self):
        assert run_cli("--mode", "dance") == 1

    def test_config_file_drives_run(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        out = tmp_path / "out"
        cfg.write_text(
            f"epochs = 1\ngroup_size = 2\nimage_size = 16\nseed = 7\n"
            f"out_dir = {out}\n"
        )
        assert run_cli("--config", str(cfg)) == 0
        assert (out / "model.ckpt").exists()


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """One tiny trained model shared by the infer/eval tests."""
    out = tmp_path_factory.mktemp("trained")
    code = cli.main(list(tiny_train_args(out)))
    assert code == 0
    return out


class TestInferMode:
    def test_predictions_match_inputs(self, trained_run, tmp_path):
        data = trained_run / "val_groups"
        preds = tmp_path / "preds"
        code = run_cli(
            "--mode", "infer", "--group-size", "2", "--image-size", "16",
            "--checkpoint", str(trained_run / "model.ckpt"),
            "--data-root", str(data), "--out-dir", str(preds),
        )
        assert code == 0
        for gid in datagen.list_groups(data):
            names = sorted(
                f[:-4] for f in os.listdir(data / gid) if f.endswith(".ppm")
            )
            for name in names:
                pred_path = preds / gid / f"{name}_pred.pgm"
                assert pred_path.exists()
                pred = read_netpbm(pred_path)
                assert pred.shape == (16, 16)
                assert 0.0 <= pred.min() and pred.max() <= 1.0

    def test_rerun_is_bit_identical(self, trained_run, tmp_path):
        data = trained_run / "val_groups"
        args = lambda d: (
            "--mode", "infer", "--group-size", "2", "--image-size", "16",
            "--checkpoint", str(trained_run / "model.ckpt"),
            "--data-root", str(data), "--out-dir", str(d),
        )
        assert run_cli(*args(tmp_path / "p1")) == 0
        assert run_cli(*args(tmp_path / "p2")) == 0
        gid = datagen.list_groups(data)[0]
        first = (tmp_path / "p1" / gid / "00_pred.pgm").read_bytes()
        second = (tmp_path / "p2" / gid / "00_pred.pgm").read_bytes()
        assert first == second

    def test_dump_flags_write_extra_files(self, trained_run, tmp_path):
        data = trained_run / "val_groups"
        preds = tmp_path / "preds"
        code = run_cli(
            "--mode", "infer", "--group-size", "2", "--image-size", "16",
            "--checkpoint", str(trained_run / "model.ckpt"),
            "--data-root", str(data), "--out-dir", str(preds),
            "--dump-maps", "--dump-attention",
        )
        assert code == 0
        gid = datagen.list_groups(data)[0]
        assert (preds / gid / "00_map.pgm").exists()
        assert (preds / gid / "00_attention.pgm").exists()

    def test_missing_checkpoint_flag_is_usage_error(self, trained_run):
        code = run_cli(
            "--mode", "infer",
            "--data-root", str(trained_run / "val_groups"),
        )
        assert code == 1

    def test_unreadable_checkpoint_is_runtime_error(self, trained_run, tmp_path):
        code = run_cli(
            "--mode", "infer", "--group-size", "2", "--image-size", "16",
            "--checkpoint", str(tmp_path / "nope.ckpt"),
            "--data-root", str(trained_run / "val_groups"),
            "--out-dir", str(tmp_path / "p"),
        )
        assert code == 2


class TestEvalMode:
    def _copy_gt_as_pred(self, data, preds):
        for gid in datagen.list_groups(data):
            os.makedirs(preds / gid, exist_ok=True)
            for fname in os.listdir(data / gid):
                if fname.endswith("_gt.pgm"):
                    gt = read_netpbm(data / gid / fname)
                    name = fname[: -len("_gt.pgm")]
                    write_pgm(preds / gid / f"{name}_pred.pgm", gt)

    def test_perfect_predictions_score_perfectly(self, trained_run, tmp_path, capsys):
        data = trained_run / "val_groups"
        preds = tmp_path / "preds"
        self._copy_gt_as_pred(data, preds)
        code = run_cli("--mode", "eval", "--data-root", str(data),
                       "--out-dir", str(preds))
        assert code == 0
        lines = (preds / "metrics.csv").read_text().splitlines()
        assert lines[-1] == "mean,0.000000,1.000000"
        assert (preds / "metric_summary.png").exists()

    def test_missing_prediction_names_file_and_fails(self, trained_run, tmp_path, capsys):
        data = trained_run / "val_groups"
        preds = tmp_path / "preds"
        self._copy_gt_as_pred(data, preds)
        gid = datagen.list_groups(data)[0]
        victim = preds / gid / "00_pred.pgm"
        victim.unlink()
        code = run_cli("--mode", "eval", "--data-root", str(data),
                       "--out-dir", str(preds))
        assert code == 2
        assert str(victim) in capsys.readouterr().out

    def test_thread_pool_matches_serial(self, trained_run, tmp_path, monkeypatch):
        data = trained_run / "val_groups"
        serial, pooled = tmp_path / "serial", tmp_path / "pooled"
        self._copy_gt_as_pred(data, serial)
        self._copy_gt_as_pred(data, pooled)
        monkeypatch.delenv("DCFM_THREADS", raising=False)
        assert run_cli("--mode", "eval", "--data-root", str(data),
                       "--out-dir", str(serial)) == 0
        monkeypatch.setenv("DCFM_THREADS", "4")
        assert run_cli("--mode", "eval", "--data-root", str(data),
                       "--out-dir", str(pooled)) == 0
        assert (serial / "metrics.csv").read_text() == (
            pooled / "metrics.csv"
        ).read_text()

    def test_bad_thread_env_is_usage_error(self, trained_run, tmp_path, monkeypatch):
        monkeypatch.setenv("DCFM_THREADS", "zero")
        code = run_cli("--mode", "eval",
                       "--data-root", str(trained_run / "val_groups"),
                       "--out-dir", str(tmp_path / "p"))
        assert code == 1


class TestSelftestMode:
    def test_selftest_passes_on_fresh_build(self, capsys):
        assert run_cli("--mode", "selftest") == 0
        out = capsys.readouterr().out
        assert out.count("pass ") >= 7
        assert "FAIL" not in out
