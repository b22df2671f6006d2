"""Synthetic co-salient groups: shared-geometry shapes among distractors.

Each group fixes one shape class; every image renders one instance of it
with independent scale, position, and color jitter, plus a few distractor
shapes drawn from the *other* classes.  The ground-truth mask marks
exactly the pixels of the shared instance (it is drawn last, on top of
any distractor).  Masks are rendered from hard inequalities with no
anti-aliasing, so they are exactly binary and can be re-rendered
bit-for-bit from the recorded placements.

Generation is a pure function of (config, shape class, group seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .netpbm import read_netpbm, write_pgm, write_ppm

SHAPE_CLASSES = ("disk", "square", "triangle", "ring")
RING_INNER_RATIO = 0.55
TRAIN_SEED_RANGE = (0, 1_000_000)  # training groups draw seeds below the split
VAL_SEED_BASE = 1_000_000  # held-out groups live at or above it


@dataclass(frozen=True)
class GenConfig:
    group_size: int = 16
    image_size: int = 64
    shape_classes: tuple = SHAPE_CLASSES
    distractors: tuple = (1, 2)  # inclusive count range per image
    size_range: tuple = (0.10, 0.20)  # shape radius as a fraction of image size
    min_color_dist: float = 0.35  # shapes must sit this far from the background color
    noise: float = 0.02  # per-pixel gaussian noise on images

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError(f"group_size must be at least 2, got {self.group_size}")
        if self.image_size % 16:
            raise ValueError(f"image_size must divide by 16, got {self.image_size}")
        if not self.shape_classes:
            raise ValueError("need at least one shape class")


@dataclass(frozen=True)
class Placement:
    """Everything needed to re-render one shape footprint."""

    shape: str
    cx: float
    cy: float
    size: float
    color: tuple


@dataclass
class GroupSample:
    group_id: str
    shape_class: str
    images: np.ndarray  # [N, 3, S, S] in [0, 1]
    masks: np.ndarray  # [N, 1, S, S] exactly binary
    targets: list  # Placement of the co-salient instance, per image
    distractors: list  # list of Placement lists, per image


def render_shape_mask(shape: str, cx: float, cy: float, size: float,
                      image_size: int) -> np.ndarray:
    """Hard membership test of every pixel center against one shape."""
    ys, xs = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    dx = xs - cx
    dy = ys - cy
    if shape == "disk":
        hit = dx * dx + dy * dy <= size * size
    elif shape == "square":
        hit = np.maximum(np.abs(dx), np.abs(dy)) <= size
    elif shape == "triangle":
        # apex at cy - size, base at cy + size, width grows linearly
        span = (dy + size) / 2.0
        hit = (dy >= -size) & (dy <= size) & (np.abs(dx) <= span)
    elif shape == "ring":
        d2 = dx * dx + dy * dy
        inner = RING_INNER_RATIO * size
        hit = (d2 >= inner * inner) & (d2 <= size * size)
    else:
        raise ValueError(f"unknown shape class: {shape}")
    return hit.astype(np.float64)


def _pick_color(rng: np.random.Generator, away_from, min_dist: float):
    """Draw a color at least min_dist (euclidean) from every anchor color."""
    for _ in range(100):
        color = rng.uniform(0.05, 0.95, 3)
        if all(np.linalg.norm(color - np.asarray(a)) >= min_dist for a in away_from):
            return tuple(float(c) for c in color)
    return tuple(float(c) for c in color)


def _pick_placement(rng: np.random.Generator, shape: str, cfg: GenConfig,
                    color) -> Placement:
    size = rng.uniform(*cfg.size_range) * cfg.image_size
    margin = size + 1.0
    cx = rng.uniform(margin, cfg.image_size - 1 - margin)
    cy = rng.uniform(margin, cfg.image_size - 1 - margin)
    return Placement(shape=shape, cx=float(cx), cy=float(cy), size=float(size),
                     color=color)


def generate_group(cfg: GenConfig, shape_class: str, group_seed: int) -> GroupSample:
    """Render one deterministic group of ``cfg.group_size`` images."""
    if shape_class not in cfg.shape_classes:
        raise ValueError(f"shape class {shape_class!r} not in {cfg.shape_classes}")
    class_index = cfg.shape_classes.index(shape_class)
    rng = np.random.default_rng([int(group_seed), class_index, 902_113])
    s = cfg.image_size
    others = [c for c in cfg.shape_classes if c != shape_class]

    images = np.zeros((cfg.group_size, 3, s, s))
    masks = np.zeros((cfg.group_size, 1, s, s))
    targets, distractor_lists = [], []
    for n in range(cfg.group_size):
        background = rng.uniform(0.05, 0.95, 3)
        canvas = np.broadcast_to(background[:, None, None], (3, s, s)).copy()

        placed = []
        if others:
            count = int(rng.integers(cfg.distractors[0], cfg.distractors[1] + 1))
            for _ in range(count):
                cls = others[int(rng.integers(len(others)))]
                color = _pick_color(rng, [background], cfg.min_color_dist)
                placed.append(_pick_placement(rng, cls, cfg, color))

        color = _pick_color(rng, [background], cfg.min_color_dist)
        target = _pick_placement(rng, shape_class, cfg, color)
        mask = render_shape_mask(shape_class, target.cx, target.cy, target.size, s)

        for p in placed:
            region = render_shape_mask(p.shape, p.cx, p.cy, p.size, s) > 0
            canvas[:, region] = np.asarray(p.color)[:, None]
        region = mask > 0
        canvas[:, region] = np.asarray(target.color)[:, None]

        if cfg.noise > 0:
            canvas = canvas + rng.normal(0.0, cfg.noise, (3, s, s))
        images[n] = np.clip(canvas, 0.0, 1.0)
        masks[n, 0] = mask
        targets.append(target)
        distractor_lists.append(placed)

    return GroupSample(group_id=f"{shape_class}-{group_seed:07d}",
                       shape_class=shape_class, images=images, masks=masks,
                       targets=targets, distractors=distractor_lists)


# -- disk layout -------------------------------------------------------------


def write_group(root, group: GroupSample) -> str:
    """Write ``<root>/<group_id>/<idx>.ppm`` plus ``<idx>_gt.pgm`` masks."""
    group_dir = os.path.join(root, group.group_id)
    os.makedirs(group_dir, exist_ok=True)
    for n in range(group.images.shape[0]):
        write_ppm(os.path.join(group_dir, f"{n:02d}.ppm"), group.images[n])
        write_pgm(os.path.join(group_dir, f"{n:02d}_gt.pgm"), group.masks[n, 0])
    return group_dir


def list_groups(root) -> list:
    """Sorted group directory names under a dataset root."""
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset root does not exist: {root}")
    return sorted(d for d in os.listdir(root)
                  if os.path.isdir(os.path.join(root, d)))


def load_group_images(group_dir) -> tuple:
    """Read back (names, images [N,3,S,S], masks [N,1,S,S] or None)."""
    names = sorted(f[:-4] for f in os.listdir(group_dir)
                   if f.endswith(".ppm") and not f.endswith("_pred.ppm"))
    if not names:
        raise FileNotFoundError(f"no .ppm images under {group_dir}")
    images, masks, have_masks = [], [], True
    for name in names:
        images.append(read_netpbm(os.path.join(group_dir, f"{name}.ppm")))
        gt_path = os.path.join(group_dir, f"{name}_gt.pgm")
        if os.path.exists(gt_path):
            masks.append(read_netpbm(gt_path)[None])
        else:
            have_masks = False
    images = np.stack(images)
    return names, images, (np.stack(masks) if have_masks else None)


def epoch_schedule(classes, repeats: int, rng: np.random.Generator) -> list:
    """One balanced, shuffled pass: every class appears ``repeats`` times."""
    schedule = [cls for cls in classes for _ in range(repeats)]
    rng.shuffle(schedule)
    return schedule
