"""Episode-based trainer for the group segmentation model."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import datagen, losses, metrics
from .config import RunConfig, echo_config
from .datagen import TRAIN_SEED_RANGE, VAL_SEED_BASE, GenConfig, GroupSample
from .model import CoSalModel, ModelConfig
from .optim import Adam

LOG_HEADER = "episode,l_iou,l_sc,cos_c,cos_b,l_tot"


class NanLossError(RuntimeError):
    """Raised when the training objective stops being finite."""


@dataclass
class EvalSummary:
    """Group-level means over a held-out set."""

    soft_iou: float
    mae: float
    f_max: float
    groups: int


@dataclass
class TrainOutcome:
    model: CoSalModel
    episodes: int
    final: EvalSummary
    checkpoint_path: str
    log_path: str


def gen_config_for(cfg: RunConfig) -> GenConfig:
    return GenConfig(group_size=cfg.group_size, image_size=cfg.image_size)


def model_config_for(cfg: RunConfig, **flags) -> ModelConfig:
    return ModelConfig(alpha=cfg.alpha, seed=cfg.seed, **flags)


def held_out_groups(cfg: RunConfig, per_class: int = 2) -> list[GroupSample]:
    """Deterministic validation groups from the reserved seed block.

    The block starts above the training seed range, so no validation
    group can ever be drawn as a training episode.
    """
    gen = gen_config_for(cfg)
    groups = []
    for i in range(per_class):
        for cls in gen.shape_classes:
            groups.append(datagen.generate_group(gen, cls, VAL_SEED_BASE + i))
    return groups


def soft_iou(pred: np.ndarray, masks: np.ndarray) -> float:
    """Mean per-image soft overlap score (1 would be a perfect match)."""
    from .tensor import Tensor

    return 1.0 - losses.iou_loss(Tensor(pred), masks).item()


def evaluate_model(model: CoSalModel, groups: list[GroupSample]) -> EvalSummary:
    """Mean soft IoU / MAE / max F-measure over held-out groups."""
    ious, maes, fs = [], [], []
    for group in groups:
        pred = model.predict(group.images)
        ious.append(soft_iou(pred, group.masks))
        for n in range(pred.shape[0]):
            report = metrics.evaluate_pair(pred[n, 0], group.masks[n, 0])
            maes.append(report.mae)
            fs.append(report.f_beta_max)
    return EvalSummary(
        soft_iou=float(np.mean(ious)),
        mae=float(np.mean(maes)),
        f_max=float(np.mean(fs)),
        groups=len(groups),
    )


def export_groups(root: str, groups: list[GroupSample]) -> None:
    for group in groups:
        datagen.write_group(root, group)


def _load_disk_groups(root: str, image_size: int) -> list[GroupSample]:
    """Load every group under ``root``; training needs masks for all."""
    group_ids = datagen.list_groups(root)
    groups = []
    for gid in group_ids:
        names, images, masks = datagen.load_group_images(os.path.join(root, gid))
        if masks is None:
            raise FileNotFoundError(f"group {gid}: no *_gt.pgm masks — cannot train")
        if images.shape[-1] != image_size or images.shape[-2] != image_size:
            raise ValueError(
                f"group {gid}: images are {images.shape[-2]}x{images.shape[-1]}, "
                f"configured image_size is {image_size}"
            )
        groups.append(
            GroupSample(group_id=gid, shape_class="", images=images, masks=masks,
                        targets=[None] * len(names), distractors=[])
        )
    if not groups:
        raise FileNotFoundError(f"no groups found under {root}")
    return groups


def run_training(
    cfg: RunConfig,
    *,
    model_config: ModelConfig | None = None,
    class_repeats: int = 1,
    val_per_class: int = 2,
    checkpoint_every: int = 200,
    resume_from: str | None = None,
    log=None,
) -> TrainOutcome:
    """Train one group per episode and evaluate on held-out groups.

    With synthetic data an epoch visits every shape class
    ``class_repeats`` times in a shuffled order, and each visit draws a
    brand-new group (scenes are never reused), so the model cannot
    memorize layouts — only the notion of the recurring shape.  With a
    dataset on disk an epoch is one pass over all group ids in random
    order.  A checkpoint is written every ``checkpoint_every`` episodes
    and at the end.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    echo_config(cfg, os.path.join(cfg.out_dir, "config_echo.txt"))

    gen = gen_config_for(cfg)
    model = CoSalModel(model_config or model_config_for(cfg))
    if resume_from:
        model.load(resume_from)
    optimizer = Adam(
        {
            "extractor": (model.extractor_parameters(), cfg.lr_extractor),
            "head": (model.head_parameters(), cfg.lr_other),
        },
        weight_decay=cfg.weight_decay,
    )
    rng = np.random.default_rng(cfg.seed)
    disk_groups = None if cfg.synthetic else _load_disk_groups(cfg.data_root, cfg.image_size)
    val_groups = held_out_groups(cfg, per_class=val_per_class)

    checkpoint_path = os.path.join(cfg.out_dir, "model.ckpt")
    log_path = os.path.join(cfg.out_dir, "loss_log.csv")
    episode = 0
    with open(log_path, "w") as log_file:
        log_file.write(LOG_HEADER + "\n")
        for epoch in range(cfg.epochs):
            if disk_groups is None:
                schedule = [
                    datagen.generate_group(gen, cls, int(rng.integers(*TRAIN_SEED_RANGE)))
                    for cls in datagen.epoch_schedule(gen.shape_classes, class_repeats, rng)
                ]
            else:
                schedule = [disk_groups[i] for i in rng.permutation(len(disk_groups))]
            for group in schedule:
                optimizer.zero_grad()
                total, report = model.loss(
                    group.images, group.masks, weight=cfg.contrast_weight
                )
                if not math.isfinite(report.l_tot):
                    raise NanLossError(
                        f"episode {episode}: objective became {report.l_tot}"
                    )
                total.backward()
                optimizer.step()
                log_file.write(
                    f"{episode},{report.l_iou:.6f},{report.l_sc:.6f},"
                    f"{report.cos_c:.6f},{report.cos_b:.6f},{report.l_tot:.6f}\n"
                )
                log_file.flush()
                episode += 1
                if episode % checkpoint_every == 0:
                    model.save(checkpoint_path)
            if log is not None:
                log(f"epoch {epoch + 1}/{cfg.epochs}: l_tot {report.l_tot:.4f}")
    model.save(checkpoint_path)

    if cfg.synthetic:
        export_groups(os.path.join(cfg.out_dir, "val_groups"), val_groups)
    final = evaluate_model(model, val_groups)
    return TrainOutcome(
        model=model,
        episodes=episode,
        final=final,
        checkpoint_path=checkpoint_path,
        log_path=log_path,
    )
