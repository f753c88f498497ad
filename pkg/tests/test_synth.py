"""Synthetic landscape tests: voronoi masks, seasonal drift, clouds, determinism."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from oracles import dilate_chebyshev, morphological_edge
from parceldelin.dataset import load_manifest
from parceldelin.errors import ConfigError
from parceldelin.synth import (
    CloudConfig,
    CloudRecord,
    SynthConfig,
    add_cloud,
    assign_cells,
    cloud_pixels,
    generate,
    masks_from_cells,
    render_images,
    tile_seed,
    voronoi_masks,
)


class TestVoronoiMasks:
    def test_two_sites_vertical_2px_stripe(self):
        sites = np.array([[4.0, 8.0], [12.0, 8.0]])
        grid = assign_cells(16, sites)
        boundary, area = masks_from_cells(grid, np.array([True, True]))
        assert area.all()
        expected = np.zeros((16, 16), dtype=np.uint8)
        expected[:, 8:10] = 1  # bisector pair (8,9), stamped to the 2-px stripe
        assert np.array_equal(boundary, expected)

    def test_tie_goes_to_lowest_site(self):
        sites = np.array([[4.0, 8.0], [12.0, 8.0]])
        grid = assign_cells(17, sites)  # column 8 is equidistant
        assert (grid[:, 8] == 0).all()

    def test_farm_fraction_zero_empty(self):
        config = SynthConfig(size_px=48, farm_fraction=0.0, seed=1)
        boundary, area, _grid = voronoi_masks(config, tile_seed(1, 0, "cells"))
        assert boundary.sum() == 0 and area.sum() == 0

    def test_farm_nonfarm_border_still_drawn(self):
        sites = np.array([[4.0, 8.0], [12.0, 8.0]])
        grid = assign_cells(16, sites)
        boundary, area = masks_from_cells(grid, np.array([True, False]))
        assert area[:, :9].all() and not area[:, 9:].any()
        assert boundary[:, 8:10].all()

    def test_boundary_within_dilated_cell_edges(self):
        """Morphological oracle: every boundary pixel sits within 2 px of the
        edge of some farm cell's own region."""
        config = SynthConfig(size_px=64, seed=3)
        for t in range(5):
            boundary, _area, grid = voronoi_masks(config, tile_seed(3, t, "cells"))
            allowed = np.zeros(grid.shape, dtype=bool)
            for cell in np.unique(grid):
                region = grid == cell
                if not (boundary & region).any() and not region.any():
                    continue
                allowed |= dilate_chebyshev(morphological_edge(region), 2)
            assert not (boundary.astype(bool) & ~allowed).any()

    def test_masks_binary(self):
        config = SynthConfig(size_px=48, seed=4)
        boundary, area, _ = voronoi_masks(config, tile_seed(4, 0, "cells"))
        assert set(np.unique(boundary)) <= {0, 1}
        assert set(np.unique(area)) <= {0, 1}


class TestRenderImages:
    def test_no_drift_no_noise_identical_slots(self):
        config = SynthConfig(size_px=32, seasonal_drift=(0.0, 0.0, 0.0), noise_sigma=0.0, seed=5)
        _b, _a, grid = voronoi_masks(config, tile_seed(5, 0, "cells"))
        images = render_images(grid, config, tile_seed(5, 0, "colors"))
        assert np.array_equal(images[0], images[1])
        assert np.array_equal(images[1], images[2])
        # piecewise constant per cell
        for cell in np.unique(grid):
            region = images[1][grid == cell]
            assert np.allclose(region, region[0])

    def test_drifted_cells_distinguishable_when_slot1_collides(self):
        config = SynthConfig(size_px=32, palette_size=1, seasonal_drift=(0.25, 0.0, 0.25), noise_sigma=0.0, seed=6)
        sites = np.array([[8.0, 16.0], [24.0, 16.0]])
        grid = assign_cells(32, sites)
        images = render_images(grid, config, tile_seed(6, 0, "colors"))
        left1 = images[1][16, 4]
        right1 = images[1][16, 28]
        assert np.allclose(left1, right1, atol=1e-6)  # palette of one: identical mid-year
        gaps = [
            float(np.max(np.abs(images[s][16, 4] - images[s][16, 28]))) for s in (0, 2)
        ]
        assert max(gaps) > 0.1

    def test_values_clamped(self):
        config = SynthConfig(size_px=32, noise_sigma=0.4, seed=7)
        _b, _a, grid = voronoi_masks(config, tile_seed(7, 0, "cells"))
        for img in render_images(grid, config, tile_seed(7, 0, "colors")):
            assert img.min() >= 0.0 and img.max() <= 1.0 and img.dtype == np.float32


class TestClouds:
    def test_probability_zero_unchanged(self):
        config = SynthConfig(size_px=32, cloud=CloudConfig(probability=0.0), seed=8)
        images = [np.zeros((32, 32, 3), dtype=np.float32) for _ in range(3)]
        out, record = add_cloud(images, config, tile_seed(8, 0, "cloud"))
        assert record is None
        assert all(np.array_equal(a, b) for a, b in zip(images, out))

    def test_full_disc_covers_quarter(self):
        config = SynthConfig(size_px=64, cloud=CloudConfig(probability=1.0, radius_frac=(0.5, 0.5)), seed=9)
        images = [np.zeros((64, 64, 3), dtype=np.float32) for _ in range(3)]
        out, record = add_cloud(images, config, tile_seed(9, 1, "cloud"))
        assert record is not None and record.radius == pytest.approx(32.0)
        covered = (out[record.slot] == 1.0).all(axis=2).mean()
        # random center may clip at the border; a corner keeps a quarter disc
        assert covered >= np.pi / 16 - 0.02

    def test_centered_disc_covers_quarter(self):
        """radius = size/2 at the image center occludes >= pi/4 of the pixels."""
        record = CloudRecord(0, (32.0, 32.0), 32.0)
        frac = cloud_pixels(record, 64).mean()
        assert frac >= np.pi / 4 - 0.02

    def test_slot1_never_clouded_by_default(self):
        config = SynthConfig(size_px=32, cloud=CloudConfig(probability=1.0), seed=10)
        for t in range(50):
            images = [np.zeros((32, 32, 3), dtype=np.float32) for _ in range(3)]
            _out, record = add_cloud(images, config, tile_seed(10, t, "cloud"))
            assert record.slot in (0, 2)

    def test_record_recomputes_occlusion_exactly(self):
        config = SynthConfig(size_px=48, cloud=CloudConfig(probability=1.0), seed=11)
        rng = np.random.default_rng(0)
        images = [rng.random((48, 48, 3)).astype(np.float32) * 0.9 for _ in range(3)]
        out, record = add_cloud(images, config, tile_seed(11, 2, "cloud"))
        occluded = cloud_pixels(record, 48)
        slot = record.slot
        assert (out[slot][occluded] == 1.0).all()
        assert np.array_equal(out[slot][~occluded], images[slot][~occluded])
        for s in range(3):
            if s != slot:
                assert np.array_equal(out[s], images[s])


def tree_digest(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestGenerate:
    def test_deterministic_tree(self, tmp_path):
        config = SynthConfig(n_tiles=10, size_px=48, seed=12)
        generate(config, tmp_path / "a")
        generate(config, tmp_path / "b")
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_parallel_generation_identical(self, tmp_path):
        config = SynthConfig(n_tiles=8, size_px=48, seed=13)
        generate(config, tmp_path / "seq", jobs=1)
        generate(config, tmp_path / "par", jobs=2)
        assert tree_digest(tmp_path / "seq") == tree_digest(tmp_path / "par")

    def test_manifest_validates_and_splits(self, tmp_path):
        config = SynthConfig(n_tiles=12, size_px=48, seed=14)
        generate(config, tmp_path)
        manifest = load_manifest(tmp_path / "manifest.json")
        assert len(manifest.tiles) == 12
        splits = [t.split for t in manifest.tiles]
        assert splits.count("train") == 9 and splits.count("val") == 1 and splits.count("test") == 2

    def test_generated_masks_satisfy_raster_invariants(self, tmp_path):
        from parceldelin.raster import load_mask_png

        config = SynthConfig(n_tiles=4, size_px=48, seed=15)
        generate(config, tmp_path, split=False)
        for t in range(4):
            b = load_mask_png(tmp_path / f"{t}_boundary.png")
            a = load_mask_png(tmp_path / f"{t}_area.png")
            assert b.shape == (48, 48) and a.shape == (48, 48)
            assert set(np.unique(b)) <= {0, 1} and set(np.unique(a)) <= {0, 1}

    def test_class_balance_near_farm_fraction(self, tmp_path):
        config = SynthConfig(n_tiles=24, size_px=48, farm_fraction=0.6, seed=16)
        generate(config, tmp_path, split=False)
        from parceldelin.raster import load_mask_png

        rates = [load_mask_png(tmp_path / f"{t}_area.png").mean() for t in range(24)]
        assert abs(float(np.mean(rates)) - 0.6) < 0.15

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(size_px=16).validate()
        with pytest.raises(ConfigError):
            SynthConfig(farm_fraction=1.5).validate()
        with pytest.raises(ConfigError):
            SynthConfig(cloud=CloudConfig(probability=2.0)).validate()
