"""Command-line entry point: train, infer, eval, and selftest modes.

Exit codes are a stable contract: 0 success, 1 usage/config error,
2 runtime failure (NaN loss, I/O problems, failed selftest, missing
evaluation pairs).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import datagen, metrics, report
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, build_config, read_config_file
from .model import CoSalModel
from .netpbm import NetpbmError, write_pgm
from .train import NanLossError, model_config_for, run_training


class _Parser(argparse.ArgumentParser):
    """Argparse variant whose usage errors raise instead of exiting.

    The default parser calls sys.exit(2); our contract reserves 2 for
    runtime failures, so usage problems are rerouted to ConfigError and
    mapped to exit code 1 in main().
    """

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="dcfm",
        description="Group co-saliency: train, infer, eval, selftest.",
    )
    parser.add_argument("--mode", choices=("train", "infer", "eval", "selftest"),
                        default=None, help="what to run (default: train)")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="flat key = value config file")
    parser.add_argument("--data-root", dest="data_root", default=None,
                        help="dataset root of <group>/<idx>.ppm [+ <idx>_gt.pgm]")
    parser.add_argument("--checkpoint", default=None,
                        help="parameter file to load (infer/eval) or resume from (train)")
    parser.add_argument("--out-dir", dest="out_dir", default=None,
                        help="where logs, checkpoints, predictions, reports go")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--group-size", dest="group_size", type=int, default=None)
    parser.add_argument("--image-size", dest="image_size", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None,
                        help="attention re-weighting exponent")
    parser.add_argument("--lambda", dest="contrast_weight", type=float, default=None,
                        help="weight of the self-contrast loss term")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--synthetic", action=argparse.BooleanOptionalAction,
                        default=None, help="draw training groups from the generator")
    parser.add_argument("--lr-extractor", dest="lr_extractor", type=float, default=None)
    parser.add_argument("--lr-other", dest="lr_other", type=float, default=None)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    parser.add_argument("--dump-maps", action="store_true",
                        help="infer: also write the mining response maps")
    parser.add_argument("--dump-attention", action="store_true",
                        help="infer: also write per-image attention matrices")
    return parser


_CONFIG_FIELDS = (
    "mode", "data_root", "checkpoint", "out_dir", "epochs", "group_size",
    "image_size", "alpha", "contrast_weight", "seed", "synthetic",
    "lr_extractor", "lr_other", "weight_decay",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {name: getattr(args, name) for name in _CONFIG_FIELDS}
    return build_config(file_values, overrides)


def _worker_count() -> int:
    raw = os.environ.get("DCFM_THREADS", "")
    if not raw:
        return 1
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"DCFM_THREADS: {exc}") from None
    if count < 1:
        raise ConfigError(f"DCFM_THREADS must be >= 1, got {count}")
    return count


def _load_model(cfg: RunConfig) -> CoSalModel:
    if not cfg.checkpoint:
        raise ConfigError(f"mode {cfg.mode} needs --checkpoint")
    model = CoSalModel(model_config_for(cfg))
    model.load(cfg.checkpoint)
    return model


def _run_train(cfg: RunConfig, log) -> int:
    outcome = run_training(cfg, resume_from=cfg.checkpoint or None, log=log)
    report.render_loss_curves(outcome.log_path,
                              os.path.join(cfg.out_dir, "loss_curves.png"))
    ev = outcome.final
    log(f"trained {outcome.episodes} episodes -> {outcome.checkpoint_path}")
    log(f"held-out: soft_iou {ev.soft_iou:.4f}  mae {ev.mae:.4f}  "
        f"fmax {ev.f_max:.4f}  ({ev.groups} groups)")
    return 0


def _run_infer(cfg: RunConfig, log, dump_maps: bool, dump_attention: bool) -> int:
    if not cfg.data_root:
        raise ConfigError("mode infer needs --data-root")
    model = _load_model(cfg)
    group_ids = datagen.list_groups(cfg.data_root)
    written = 0
    for gid in group_ids:
        names, images, _ = datagen.load_group_images(os.path.join(cfg.data_root, gid))
        out_group = os.path.join(cfg.out_dir, gid)
        os.makedirs(out_group, exist_ok=True)
        result = model.forward(images)
        pred = result.pred.data
        for k, name in enumerate(names):
            write_pgm(os.path.join(out_group, f"{name}_pred.pgm"), pred[k, 0])
            written += 1
        if dump_maps and result.mining is not None:
            from .dpg import response_map_to_gray

            final = result.mining.maps.final.data
            for k, name in enumerate(names):
                write_pgm(os.path.join(out_group, f"{name}_map.pgm"),
                          response_map_to_gray(final[k]))
        if dump_attention:
            from . import dfe
            from .model import DecisionCache
            from .tensor import Tensor

            fused = result.fused
            decisions = DecisionCache()
            dfe.enhance(Tensor(fused.data), model.dfe_params, model.config.alpha,
                        decisions)
            for k, name in enumerate(names):
                _, weights = decisions[f"dfe.{k}"]
                peak = weights.max()
                write_pgm(os.path.join(out_group, f"{name}_attention.pgm"),
                          weights / (peak if peak > 0 else 1.0))
    log(f"wrote {written} predictions under {cfg.out_dir}")
    return 0


def _run_eval(cfg: RunConfig, log) -> int:
    if not cfg.data_root:
        raise ConfigError("mode eval needs --data-root")
    workers = _worker_count()
    pred_root = cfg.out_dir
    group_ids = datagen.list_groups(cfg.data_root)
    pairs, missing = [], []
    for gid in group_ids:
        group_dir = os.path.join(cfg.data_root, gid)
        names, _, masks = datagen.load_group_images(group_dir)
        if masks is None:
            continue
        for k, name in enumerate(names):
            pred_path = os.path.join(pred_root, gid, f"{name}_pred.pgm")
            if not os.path.exists(pred_path):
                missing.append(pred_path)
            else:
                pairs.append((f"{gid}/{name}", pred_path, masks[k, 0]))
    if missing:
        for path in missing:
            log(f"missing prediction: {path}")
        log(f"eval aborted: {len(missing)} prediction(s) missing")
        return 2
    if not pairs:
        log(f"eval aborted: no mask-bearing groups under {cfg.data_root}")
        return 2

    from .netpbm import read_netpbm

    def score(pair):
        label, pred_path, gt = pair
        pred = read_netpbm(pred_path)
        try:
            rep = metrics.evaluate_pair(pred, gt)
        except metrics.UndefinedMetricError as exc:
            return label, None, str(exc)
        return label, rep, None

    if workers == 1:
        scored = [score(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(score, pairs))

    rows, curves_p, curves_r = [], [], []
    for label, rep, problem in scored:
        if rep is None:
            log(f"skipping {label}: {problem}")
            continue
        rows.append((label, rep.mae, rep.f_beta_max))
        curves_p.append(rep.precision)
        curves_r.append(rep.recall)
    if not rows:
        log("eval aborted: every image was skipped")
        return 2
    mean_mae = float(np.mean([r[1] for r in rows]))
    mean_fmax = float(np.mean([r[2] for r in rows]))
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "metrics.csv")
    metrics.write_report_csv(csv_path, rows, mean_mae, mean_fmax)
    report.render_metric_summary(rows, curves_p, curves_r,
                                 os.path.join(cfg.out_dir, "metric_summary.png"))
    log(f"evaluated {len(rows)} images: mean mae {mean_mae:.4f}, "
        f"mean fmax {mean_fmax:.4f} -> {csv_path}")
    return 0


def _run_selftest(cfg: RunConfig, log) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(log=log, seed=cfg.seed) else 2


def main(argv=None) -> int:
    parser = build_parser()
    log = print
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if cfg.mode == "train":
            return _run_train(cfg, log)
        if cfg.mode == "infer":
            return _run_infer(cfg, log, args.dump_maps, args.dump_attention)
        if cfg.mode == "eval":
            return _run_eval(cfg, log)
        return _run_selftest(cfg, log)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NanLossError, NetpbmError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
