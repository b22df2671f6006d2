"""Tests for the synthetic group generator and NetPBM I/O."""

import numpy as np
import pytest

from dcfm import datagen, oracles
from dcfm.datagen import GenConfig, generate_group
from dcfm.netpbm import NetpbmError, read_netpbm, write_pgm, write_ppm


@pytest.fixture
def cfg():
    return GenConfig(group_size=4, image_size=32)


class TestGenerateGroup:
    def test_deterministic_bit_for_bit(self, cfg):
        a = generate_group(cfg, "disk", 123)
        b = generate_group(cfg, "disk", 123)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.masks, b.masks)

    def test_different_seeds_differ(self, cfg):
        a = generate_group(cfg, "disk", 123)
        b = generate_group(cfg, "disk", 124)
        assert not np.array_equal(a.images, b.images)

    def test_masks_are_exactly_binary_and_nonempty(self, cfg):
        for cls in cfg.shape_classes:
            group = generate_group(cfg, cls, 7)
            assert set(np.unique(group.masks)) <= {0.0, 1.0}
            assert (group.masks.sum(axis=(1, 2, 3)) > 0).all()

    def test_images_in_unit_range(self, cfg):
        group = generate_group(cfg, "ring", 9)
        assert group.images.min() >= 0.0 and group.images.max() <= 1.0

    def test_rerender_oracle_reproduces_masks_exactly(self, cfg):
        """Loop-rasterizing the recorded placements must equal every mask."""
        for cls in cfg.shape_classes:
            group = generate_group(cfg, cls, 55)
            for n, placement in enumerate(group.targets):
                redone = oracles.rasterize_mask_loops(
                    placement.shape, placement.cx, placement.cy, placement.size,
                    cfg.image_size, cfg.image_size)
                assert np.array_equal(group.masks[n, 0], redone), (cls, n)

    def test_mask_iou_with_rerender_is_one(self, cfg):
        group = generate_group(cfg, "triangle", 3)
        p = group.targets[0]
        redone = datagen.render_shape_mask(p.shape, p.cx, p.cy, p.size, cfg.image_size)
        inter = (group.masks[0, 0] * redone).sum()
        union = group.masks[0, 0].sum() + redone.sum() - inter
        assert inter / union == 1.0

    def test_no_distractors_leaves_one_object_per_image(self):
        cfg = GenConfig(group_size=3, image_size=32, distractors=(0, 0), noise=0.0)
        group = generate_group(cfg, "square", 21)
        for n in range(3):
            # away from the mask the image is exactly the uniform background
            off = group.images[n][:, group.masks[n, 0] == 0]
            assert np.unique(off.round(12), axis=1).shape[1] == 1

    def test_distractors_come_from_other_classes(self, cfg):
        group = generate_group(cfg, "disk", 31)
        for placed in group.distractors:
            for p in placed:
                assert p.shape != "disk"

    def test_group_size_below_two_rejected(self):
        with pytest.raises(ValueError):
            GenConfig(group_size=1)

    def test_image_size_must_divide_by_16(self):
        with pytest.raises(ValueError):
            GenConfig(image_size=50)

    def test_epoch_schedule_is_balanced(self):
        rng = np.random.default_rng(0)
        schedule = datagen.epoch_schedule(("a", "b", "c"), 4, rng)
        assert len(schedule) == 12
        assert all(schedule.count(cls) == 4 for cls in ("a", "b", "c"))


class TestDiskLayout:
    def test_write_and_load_roundtrip(self, cfg, tmp_path):
        group = generate_group(cfg, "disk", 77)
        gdir = datagen.write_group(tmp_path, group)
        names, images, masks = datagen.load_group_images(gdir)
        assert names == [f"{i:02d}" for i in range(cfg.group_size)]
        assert masks is not None
        # masks are binary so the 8-bit roundtrip is lossless
        assert np.array_equal(masks, group.masks)
        # images quantize to 1/255 steps
        assert np.abs(images - group.images).max() <= 0.5 / 255.0

    def test_list_groups_sorted(self, cfg, tmp_path):
        for seed in (5, 3):
            datagen.write_group(tmp_path, generate_group(cfg, "ring", seed))
        assert datagen.list_groups(tmp_path) == ["ring-0000003", "ring-0000005"]

    def test_missing_root_raises(self):
        with pytest.raises(FileNotFoundError):
            datagen.list_groups("/nonexistent/place")


class TestNetpbm:
    def test_pgm_header_bytes(self, tmp_path):
        path = tmp_path / "m.pgm"
        write_pgm(path, np.zeros((64, 64)))
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n64 64\n255\n")
        assert len(blob) == len(b"P5\n64 64\n255\n") + 64 * 64
        assert set(blob[len(b"P5\n64 64\n255\n"):]) == {0}

    def test_pgm_roundtrip_quantizes_half_up(self, tmp_path):
        path = tmp_path / "m.pgm"
        values = np.array([[0.0, 1.0 / 510.0, 0.5, 1.0]])  # 1/510 rounds up to 1
        write_pgm(path, values)
        back = read_netpbm(path)
        assert np.array_equal(back * 255, [[0, 1, 128, 255]])

    def test_ppm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        image = rng.random((3, 5, 7))
        path = tmp_path / "c.ppm"
        write_ppm(path, image)
        back = read_netpbm(path)
        assert back.shape == (3, 5, 7)
        assert np.abs(back - image).max() <= 0.5 / 255.0

    def test_read_handles_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5 # magic\n# a comment line\n2 1\n255\n\x00\xff")
        assert np.array_equal(read_netpbm(path), [[0.0, 1.0]])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(NetpbmError, match="magic"):
            read_netpbm(path)

    def test_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(NetpbmError, match="maxval"):
            read_netpbm(path)

    def test_truncated_raster_rejected(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(NetpbmError, match="raster"):
            read_netpbm(path)

    def test_error_names_the_file(self, tmp_path):
        path = tmp_path / "broken.pgm"
        path.write_bytes(b"P5\n4")
        with pytest.raises(NetpbmError, match="broken.pgm"):
            read_netpbm(path)
