"""Ground-truth mask rendering: 2-px boundary polylines and filled areas.

Masks are row-major uint8 arrays with values in {0, 1}.  Boundary thickness
comes from stamping a 2x2 block (offsets {0,1} x {0,1}) on every Bresenham
pixel of each ring segment.  Fills use the even-odd rule sampled at pixel
centers (c + 0.5, r + 0.5); an edge crossing counts when exactly one of its
endpoints lies strictly below the scanline.  Rendering is deterministic and
vertices outside the tile are kept, with clipping applied at stamp time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import FormatError
from .geodata.tiles import geo_to_pixel
from .geodata.types import ParcelRecord, TileFootprint


def empty_mask(size_px: int, width: int | None = None) -> np.ndarray:
    """All-zero mask of shape (size_px, width or size_px)."""
    return np.zeros((size_px, width if width is not None else size_px), dtype=np.uint8)


@dataclass
class PixelPolygon:
    """Integer-vertex polygon in pixel space: outer ring plus holes."""

    outer: list[tuple[int, int]]
    holes: list[list[tuple[int, int]]] = field(default_factory=list)

    @classmethod
    def from_rings(cls, outer, holes=()) -> "PixelPolygon":
        """Collapse consecutive duplicate vertices; rings may end degenerate."""
        return cls(_collapse(outer), [_collapse(h) for h in holes])


def _collapse(ring) -> list[tuple[int, int]]:
    pts = [(int(c), int(r)) for c, r in ring]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    out: list[tuple[int, int]] = []
    for p in pts:
        if not out or p != out[-1]:
            out.append(p)
    return out


def _ring_is_degenerate(ring: list[tuple[int, int]]) -> bool:
    if len(ring) < 3:
        return True
    (x0, y0) = ring[0]
    return all((x - x0) * (ring[1][1] - y0) == (y - y0) * (ring[1][0] - x0) for x, y in ring[2:])


def _stamp(mask: np.ndarray, col: int, row: int) -> None:
    h, w = mask.shape
    for dc in (0, 1):
        for dr in (0, 1):
            c, r = col + dc, row + dr
            if 0 <= c < w and 0 <= r < h:
                mask[r, c] = 1


def draw_segment_thick2(mask: np.ndarray, p0: tuple[int, int], p1: tuple[int, int]) -> np.ndarray:
    """Stamp a 2x2 block on every Bresenham pixel from p0 to p1 (inclusive).

    Endpoints may lie outside the mask; out-of-bounds stamps are clipped.
    Idempotent: re-drawing a segment changes nothing.
    """
    h, w = mask.shape
    x0, y0 = int(p0[0]), int(p0[1])
    x1, y1 = int(p1[0]), int(p1[1])
    # cheap reject: the stamped segment cannot touch the mask
    if max(x0, x1) < -1 or min(x0, x1) >= w or max(y0, y1) < -1 or min(y0, y1) >= h:
        return mask
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        _stamp(mask, x, y)
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return mask


def project_parcel(tile: TileFootprint, parcel: ParcelRecord, size_px: int) -> PixelPolygon:
    """Project a parcel's rings into tile pixel space."""
    outer = [geo_to_pixel(tile, p, size_px) for p in parcel.polygon.outer]
    holes = [[geo_to_pixel(tile, p, size_px) for p in ring] for ring in parcel.polygon.holes]
    return PixelPolygon.from_rings(outer, holes)


def render_boundary_mask(tile: TileFootprint, parcels: list[ParcelRecord], size_px: int) -> np.ndarray:
    """Draw every ring (outer and holes) of every parcel as a closed 2-px polyline."""
    mask = empty_mask(size_px)
    for parcel in parcels:
        poly = project_parcel(tile, parcel, size_px)
        for ring in [poly.outer] + poly.holes:
            n = len(ring)
            if n == 1:
                _stamp(mask, *ring[0])
                continue
            for i in range(n):
                draw_segment_thick2(mask, ring[i], ring[(i + 1) % n])
    return mask


def _crossings(rings: list[list[tuple[int, int]]], y: float) -> list[float]:
    """Sorted x positions where ring edges cross the horizontal line at y.

    Half-open rule: an edge counts iff exactly one endpoint is strictly
    below y, which resolves vertex ties without double counting.
    """
    xs = []
    for ring in rings:
        n = len(ring)
        for i in range(n):
            x0, y0 = ring[i]
            x1, y1 = ring[(i + 1) % n]
            if y0 == y1:
                continue
            if (y0 <= y) != (y1 <= y):
                xs.append(x0 + (y - y0) * (x1 - x0) / (y1 - y0))
    xs.sort()
    return xs


def fill_polygon(mask: np.ndarray, poly: PixelPolygon) -> bool:
    """Set pixels whose centers are inside by the even-odd rule over all rings.

    Returns True when a degenerate ring was skipped (outer degenerate means
    nothing is rendered at all).
    """
    degenerate = False
    if _ring_is_degenerate(poly.outer):
        return True
    rings = [poly.outer]
    for hole in poly.holes:
        if _ring_is_degenerate(hole):
            degenerate = True
        else:
            rings.append(hole)
    h, w = mask.shape
    for row in range(h):
        xs = _crossings(rings, row + 0.5)
        for k in range(0, len(xs) - 1, 2):
            # pixel centers c + 0.5 in [xs[k], xs[k+1])
            c0 = max(0, math.ceil(xs[k] - 0.5))
            c1 = min(w, math.ceil(xs[k + 1] - 0.5))
            if c1 > c0:
                mask[row, c0:c1] = 1
    return degenerate


def render_area_mask(tile: TileFootprint, parcels: list[ParcelRecord], size_px: int) -> np.ndarray:
    """Union (logical OR) of per-parcel even-odd fills."""
    mask = empty_mask(size_px)
    scratch = empty_mask(size_px)
    for parcel in parcels:
        scratch[:] = 0
        fill_polygon(scratch, project_parcel(tile, parcel, size_px))
        np.logical_or(mask, scratch, out=mask)
    return mask.astype(np.uint8)


def save_mask_png(mask: np.ndarray, path) -> None:
    """Write a {0,1} mask as 8-bit grayscale PNG with values {0, 255}."""
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Read a mask PNG written by save_mask_png back to {0,1} uint8."""
    with Image.open(path) as im:
        if im.mode != "L":
            raise FormatError(f"{path}: expected 8-bit grayscale mask PNG, got mode {im.mode}")
        arr = np.asarray(im)
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        raise FormatError(f"{path}: mask PNG contains values other than 0/255")
    return (arr // 255).astype(np.uint8)
