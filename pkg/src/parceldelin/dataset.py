"""Per-tile sample assembly, manifest (de)serialization, and the 80/10/10 split.

A dataset on disk is a directory of 8-bit PNGs plus one ``manifest.json``:

    {"version": 1, "size_px": ..., "seed": ...,
     "tiles": [{"tile_id": ..., "images": {"s0": path|null, "s1": path, "s2": path|null},
                "boundary": path, "area": path, "split": "train"|"val"|"test"}, ...]}

Paths are relative to the manifest's directory.  The mid-year slot s1 is
mandatory; a missing s0/s2 image is replaced at assembly time by a copy of
the s1 image, with the substitution flagged on the sample.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, FormatError
from .raster import load_mask_png
from .variants import ModelVariant

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


class TimeSlot(IntEnum):
    """Three calendar-quarter composites; SLOT1 (Apr-Jun) aligns with the masks."""

    SLOT0 = 0  # Jan-Mar
    SLOT1 = 1  # Apr-Jun
    SLOT2 = 2  # Jul-Sep


@dataclass
class TileEntry:
    tile_id: int
    images: list[str | None]  # per-slot path or None (s1 must be a path)
    boundary: str
    area: str
    split: str = "train"


@dataclass
class DatasetManifest:
    size_px: int
    seed: int
    tiles: list[TileEntry] = field(default_factory=list)
    version: int = 1


@dataclass
class Sample:
    """One training instance: three RGB slot images plus both target masks."""

    tile_id: int
    images: list[np.ndarray]  # 3 x (H, W, 3) float32 in [0, 1]
    substituted: tuple[bool, bool, bool]
    boundary_mask: np.ndarray  # (H, W) uint8 {0,1}
    area_mask: np.ndarray


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG to float32 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        if im.format != "PNG":
            raise FormatError(f"{path}: expected PNG, got {im.format}")
        if im.mode != "RGB":
            raise FormatError(f"{path}: expected 8-bit RGB, got mode {im.mode}")
        arr = np.asarray(im, dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def save_image(arr: np.ndarray, path) -> None:
    """Write float [0,1] (H, W, 3) to an 8-bit RGB PNG (nearest byte)."""
    data = np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def assemble_sample(row: TileEntry, base_dir) -> Sample:
    """Load one tile's images and masks, substituting missing s0/s2 with s1."""
    base = Path(base_dir)
    if row.images[TimeSlot.SLOT1] is None:
        raise DataError(f"tile {row.tile_id}: slot-1 image is required and missing")
    s1 = load_image(base / row.images[TimeSlot.SLOT1])
    images: list[np.ndarray] = []
    substituted = []
    for slot in TimeSlot:
        path = row.images[slot]
        if path is None:
            images.append(s1.copy())
            substituted.append(True)
        else:
            img = s1 if slot == TimeSlot.SLOT1 else load_image(base / path)
            images.append(img)
            substituted.append(False)
    boundary = load_mask_png(base / row.boundary)
    area = load_mask_png(base / row.area)
    shapes = {im.shape[:2] for im in images} | {boundary.shape, area.shape}
    if len(shapes) != 1:
        raise DataError(f"tile {row.tile_id}: image/mask size mismatch {sorted(shapes)}")
    return Sample(row.tile_id, images, tuple(substituted), boundary, area)


def to_input_tensor(sample: Sample, variant: ModelVariant) -> np.ndarray:
    """Channels-first float32 input: s1 RGB (3,H,W) or slots 0,1,2 stacked (9,H,W)."""
    if variant.input_channels == 3:
        return np.ascontiguousarray(sample.images[TimeSlot.SLOT1].transpose(2, 0, 1))
    return np.concatenate(
        [np.ascontiguousarray(im.transpose(2, 0, 1)) for im in sample.images], axis=0
    )


def split_dataset(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Assign train/val/test splits by seeded shuffle: floor(0.8n)/floor(0.1n)/rest."""
    n = len(manifest.tiles)
    if n < 10:
        raise ConfigError(f"need at least 10 tiles to split, got {n}")
    order = sorted(range(n), key=lambda i: manifest.tiles[i].tile_id)
    random.Random(seed).shuffle(order)
    n_train = int(SPLIT_FRACTIONS[0] * n)
    n_val = int(SPLIT_FRACTIONS[1] * n)
    assignment = {}
    for pos, idx in enumerate(order):
        if pos < n_train:
            assignment[idx] = "train"
        elif pos < n_train + n_val:
            assignment[idx] = "val"
        else:
            assignment[idx] = "test"
    tiles = [
        TileEntry(t.tile_id, list(t.images), t.boundary, t.area, assignment[i])
        for i, t in enumerate(manifest.tiles)
    ]
    return DatasetManifest(manifest.size_px, seed, tiles, manifest.version)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "version": manifest.version,
        "size_px": manifest.size_px,
        "seed": manifest.seed,
        "tiles": [
            {
                "tile_id": t.tile_id,
                "images": {"s0": t.images[0], "s1": t.images[1], "s2": t.images[2]},
                "boundary": t.boundary,
                "area": t.area,
                "split": t.split,
            }
            for t in manifest.tiles
        ],
    }


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n")


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise FormatError(f"manifest field {path}: {message}")


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest; violations name the offending field path."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "$", "must be a JSON object")
    _require(doc.get("version") == 1, "version", f"must be 1, got {doc.get('version')!r}")
    _require(isinstance(doc.get("size_px"), int) and doc["size_px"] >= 1, "size_px", "must be a positive integer")
    _require(isinstance(doc.get("seed"), int), "seed", "must be an integer")
    _require(isinstance(doc.get("tiles"), list), "tiles", "must be a list")
    tiles = []
    seen = set()
    for i, t in enumerate(doc["tiles"]):
        where = f"tiles[{i}]"
        _require(isinstance(t, dict), where, "must be an object")
        _require(isinstance(t.get("tile_id"), int), f"{where}.tile_id", "must be an integer")
        _require(t["tile_id"] not in seen, f"{where}.tile_id", f"duplicate tile_id {t['tile_id']}")
        seen.add(t["tile_id"])
        imgs = t.get("images")
        _require(isinstance(imgs, dict), f"{where}.images", "must be an object")
        per_slot = []
        for key in ("s0", "s1", "s2"):
            val = imgs.get(key) if imgs else None
            if key == "s1":
                _require(isinstance(val, str), f"{where}.images.s1", "must be a path (slot 1 is mandatory)")
            else:
                _require(val is None or isinstance(val, str), f"{where}.images.{key}", "must be a path or null")
            per_slot.append(val)
        for key in ("boundary", "area"):
            _require(isinstance(t.get(key), str), f"{where}.{key}", "must be a path")
        _require(t.get("split") in SPLITS, f"{where}.split", f"must be one of {SPLITS}")
        tiles.append(TileEntry(t["tile_id"], per_slot, t["boundary"], t["area"], t["split"]))
    return DatasetManifest(doc["size_px"], doc["seed"], tiles, doc["version"])


def split_tiles(manifest: DatasetManifest, split: str) -> list[TileEntry]:
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    return [t for t in manifest.tiles if t.split == split]


def load_split(manifest: DatasetManifest, base_dir, split: str) -> list[Sample]:
    """Assemble every sample of one split, in manifest order."""
    return [assemble_sample(t, base_dir) for t in split_tiles(manifest, split)]
