"""Synthetic parcel landscapes for desk-scale end-to-end runs.

Each tile is a Voronoi partition of the pixel grid; a random subset of
cells is farmland.  The three seasonal images share per-cell base colors
drawn from a small per-tile palette (so neighboring parcels frequently
collide in the mid-year slot) and get an independent per-cell color drift
in the other slots, which makes parcels separable over time even when they
are indistinguishable in any single slot.  Optional opaque white discs
simulate clouds on slots 0/2.

All randomness is derived from sha256(seed, tile_id, stage), so per-tile
generation can run in parallel without changing a single byte of output.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, TileEntry, save_image, save_manifest, split_dataset
from .errors import ConfigError
from .raster import save_mask_png


@dataclass
class CloudConfig:
    probability: float = 0.0
    radius_frac: tuple[float, float] = (0.2, 0.45)  # fraction of size_px
    allow_slot1: bool = False  # by default clouds hit only slots 0 and 2


@dataclass
class SynthConfig:
    n_tiles: int = 20
    size_px: int = 96
    sites_range: tuple[int, int] = (6, 14)
    seasonal_drift: tuple[float, float, float] = (0.25, 0.0, 0.25)  # per-slot magnitude
    noise_sigma: float = 0.015
    cloud: CloudConfig = field(default_factory=CloudConfig)
    farm_fraction: float = 0.85
    palette_size: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.size_px < 32:
            raise ConfigError(f"size_px must be >= 32, got {self.size_px}")
        if not 0.0 <= self.farm_fraction <= 1.0:
            raise ConfigError(f"farm_fraction must be in [0,1], got {self.farm_fraction}")
        if not 0.0 <= self.cloud.probability <= 1.0:
            raise ConfigError(f"cloud probability must be in [0,1], got {self.cloud.probability}")
        if self.sites_range[0] < 2 or self.sites_range[1] < self.sites_range[0]:
            raise ConfigError(f"bad sites_range {self.sites_range}")
        if self.palette_size < 1:
            raise ConfigError("palette_size must be >= 1")


@dataclass(frozen=True)
class CloudRecord:
    """Enough to recompute the occluded pixel set exactly."""

    slot: int
    center: tuple[float, float]  # (col, row)
    radius: float


def tile_seed(seed: int, tile_id: int, stage: str = "") -> int:
    """Stable per-tile (and per-stage) seed, independent of process layout."""
    digest = hashlib.sha256(f"{seed}:{tile_id}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def assign_cells(size_px: int, sites: np.ndarray) -> np.ndarray:
    """Nearest-site (L2) cell id per pixel; ties go to the lowest site index."""
    cols = np.arange(size_px, dtype=np.float64)
    rows = np.arange(size_px, dtype=np.float64)
    dx = cols[None, None, :] - sites[:, 0, None, None]
    dy = rows[None, :, None] - sites[:, 1, None, None]
    return np.argmin(dx * dx + dy * dy, axis=0).astype(np.int32)


def masks_from_cells(cell_grid: np.ndarray, farm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(boundary, area) masks from a cell-id grid and per-cell farm flags.

    A boundary seed pixel is the first pixel of any horizontally/vertically
    adjacent pair that straddles two cells with farmland involved; the seed
    set is thickened to 2 px with the same 2x2 stamp the rasterizer uses.
    """
    is_farm = farm[cell_grid]
    area = is_farm.astype(np.uint8)
    edge = np.zeros(cell_grid.shape, dtype=bool)
    diff_h = cell_grid[:, :-1] != cell_grid[:, 1:]
    edge[:, :-1] |= diff_h & (is_farm[:, :-1] | is_farm[:, 1:])
    diff_v = cell_grid[:-1, :] != cell_grid[1:, :]
    edge[:-1, :] |= diff_v & (is_farm[:-1, :] | is_farm[1:, :])
    boundary = edge.copy()
    boundary[:, 1:] |= edge[:, :-1]
    boundary[1:, :] |= edge[:-1, :]
    boundary[1:, 1:] |= edge[:-1, :-1]
    return boundary.astype(np.uint8), area


def voronoi_masks(config: SynthConfig, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(boundary mask, area mask, cell-id grid) for one tile."""
    rng = np.random.default_rng(seed)
    n_sites = int(rng.integers(config.sites_range[0], config.sites_range[1] + 1))
    sites = rng.uniform(0, config.size_px, size=(n_sites, 2))
    farm = rng.random(n_sites) < config.farm_fraction
    cell_grid = assign_cells(config.size_px, sites)
    boundary, area = masks_from_cells(cell_grid, farm)
    return boundary, area, cell_grid


def render_images(cell_grid: np.ndarray, config: SynthConfig, seed: int) -> list[np.ndarray]:
    """Three (H, W, 3) float32 images in [0, 1] for slots 0, 1, 2."""
    rng = np.random.default_rng(seed)
    n_cells = int(cell_grid.max()) + 1
    palette = rng.uniform(0.15, 0.85, size=(config.palette_size, 3))
    base = palette[rng.integers(0, config.palette_size, size=n_cells)]
    images = []
    for slot in range(3):
        mag = config.seasonal_drift[slot]
        hue = mag * rng.uniform(-1.0, 1.0, size=(n_cells, 3))
        brightness = mag * rng.uniform(-1.0, 1.0, size=(n_cells, 1))
        colors = base + hue + brightness
        img = colors[cell_grid]
        if config.noise_sigma > 0:
            img = img + rng.normal(0.0, config.noise_sigma, size=img.shape)
        images.append(np.clip(img, 0.0, 1.0).astype(np.float32))
    return images


def add_cloud(images: list[np.ndarray], config: SynthConfig, seed: int) -> tuple[list[np.ndarray], CloudRecord | None]:
    """With the configured probability, paint one slot with a white disc."""
    rng = np.random.default_rng(seed)
    if rng.random() >= config.cloud.probability:
        return images, None
    slots = (0, 1, 2) if config.cloud.allow_slot1 else (0, 2)
    slot = int(slots[rng.integers(0, len(slots))])
    size = images[slot].shape[0]
    cx, cy = rng.uniform(0, size, size=2)
    lo, hi = config.cloud.radius_frac
    radius = float(rng.uniform(lo, hi) * size)
    record = CloudRecord(slot, (float(cx), float(cy)), radius)
    out = [im.copy() for im in images]
    out[slot][cloud_pixels(record, size)] = 1.0
    return out, record


def cloud_pixels(record: CloudRecord, size_px: int) -> np.ndarray:
    """Boolean occlusion mask recomputed exactly from a cloud record."""
    cols = np.arange(size_px, dtype=np.float64)
    rows = np.arange(size_px, dtype=np.float64)
    dx = cols[None, :] - record.center[0]
    dy = rows[:, None] - record.center[1]
    return dx * dx + dy * dy <= record.radius**2


def generate_tile(config: SynthConfig, tile_id: int, out_dir: Path) -> tuple[dict, CloudRecord | None]:
    """Render and write one tile; returns its manifest row and cloud record."""
    boundary, area, cell_grid = voronoi_masks(config, tile_seed(config.seed, tile_id, "cells"))
    images = render_images(cell_grid, config, tile_seed(config.seed, tile_id, "colors"))
    record = None
    if config.cloud.probability > 0:
        images, record = add_cloud(images, config, tile_seed(config.seed, tile_id, "cloud"))
    paths = [f"{tile_id}_{slot}.png" for slot in range(3)]
    for slot, (img, name) in enumerate(zip(images, paths)):
        save_image(img, out_dir / name)
    save_mask_png(boundary, out_dir / f"{tile_id}_boundary.png")
    save_mask_png(area, out_dir / f"{tile_id}_area.png")
    row = {
        "tile_id": tile_id,
        "images": paths,
        "boundary": f"{tile_id}_boundary.png",
        "area": f"{tile_id}_area.png",
    }
    return row, record


def generate(config: SynthConfig, out_dir, split: bool | None = None, jobs: int = 1) -> DatasetManifest:
    """Write n_tiles synthetic samples plus manifest.json; fully seed-determined.

    ``split`` defaults to applying the 80/10/10 split when there are at
    least 10 tiles.  Cloud records go to a ``clouds.json`` sidecar.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tile_ids = list(range(config.n_tiles))
    if jobs > 1:
        from multiprocessing import Pool

        with Pool(jobs) as pool:
            results = pool.starmap(generate_tile, [(config, i, out) for i in tile_ids])
    else:
        results = [generate_tile(config, i, out) for i in tile_ids]

    tiles = [TileEntry(r["tile_id"], list(r["images"]), r["boundary"], r["area"], "train") for r, _ in results]
    manifest = DatasetManifest(config.size_px, config.seed, tiles)
    if split is None:
        split = config.n_tiles >= 10
    if split:
        manifest = split_dataset(manifest, config.seed)
    save_manifest(manifest, out / "manifest.json")
    clouds = {
        str(r["tile_id"]): {"slot": c.slot, "center": list(c.center), "radius": c.radius}
        for (r, c) in results
        if c is not None
    }
    (out / "clouds.json").write_text(json.dumps(clouds, indent=2, sort_keys=True) + "\n")
    return manifest
