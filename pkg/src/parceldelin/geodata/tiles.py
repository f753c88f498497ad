"""Tile footprint sampling and geography->pixel mapping.

Footprints are squares of fixed ground size centered on parcel centroids.
Meters are converted to degrees with a local equirectangular approximation
(1 deg latitude = 111 320 m), which is sub-pixel accurate at the 2.24 km
tile scale.
"""

from __future__ import annotations

import math
import random

from ..errors import CapacityError, DegenerateGeometryError, DomainError
from .types import GeoPoint, ParcelRecord, PolygonGeo, TileFootprint

METERS_PER_DEG = 111320.0
TILE_SIDE_M = 2240.0


def _ring_area_centroid(ring: list[GeoPoint]) -> tuple[float, float, float]:
    """Signed shoelace area and centroid of one ring (in degree coordinates)."""
    a = 0.0
    cx = 0.0
    cy = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i].lon_deg, ring[i].lat_deg
        x1, y1 = ring[(i + 1) % n].lon_deg, ring[(i + 1) % n].lat_deg
        cross = x0 * y1 - x1 * y0
        a += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    a *= 0.5
    if a == 0.0:
        return 0.0, 0.0, 0.0
    return a, cx / (6.0 * a), cy / (6.0 * a)


def centroid(poly: PolygonGeo) -> GeoPoint:
    """Area-weighted centroid of the outer ring minus its holes."""
    a_out, cx, cy = _ring_area_centroid(poly.outer)
    w = abs(a_out)
    sx, sy = w * cx, w * cy
    for hole in poly.holes:
        a_h, hx, hy = _ring_area_centroid(hole)
        w -= abs(a_h)
        sx -= abs(a_h) * hx
        sy -= abs(a_h) * hy
    if w <= 0.0 or abs(a_out) == 0.0:
        raise DegenerateGeometryError("polygon has zero net area; centroid undefined")
    return GeoPoint(sx / w, sy / w)


def tile_bbox(center: GeoPoint, side_m: float = TILE_SIDE_M) -> tuple[float, float, float, float]:
    """(lon_min, lat_min, lon_max, lat_max) of a square of side_m around center."""
    if abs(center.lat_deg) >= 85.0:
        raise DomainError(f"latitude {center.lat_deg} too close to a pole for tile footprints")
    dlat = (side_m / 2.0) / METERS_PER_DEG
    dlon = (side_m / 2.0) / (METERS_PER_DEG * math.cos(math.radians(center.lat_deg)))
    return (
        center.lon_deg - dlon,
        center.lat_deg - dlat,
        center.lon_deg + dlon,
        center.lat_deg + dlat,
    )


def polygon_bbox(poly: PolygonGeo) -> tuple[float, float, float, float]:
    """(lon_min, lat_min, lon_max, lat_max) of the outer ring."""
    lons = [p.lon_deg for p in poly.outer]
    lats = [p.lat_deg for p in poly.outer]
    return min(lons), min(lats), max(lons), max(lats)


def _bboxes_intersect(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def sample_tile_centers(
    parcels: list[ParcelRecord],
    n: int,
    seed: int,
    max_attempts: int | None = None,
    side_m: float = TILE_SIDE_M,
) -> list[TileFootprint]:
    """Sample n non-overlapping tile footprints centered on parcel centroids.

    Parcels are drawn uniformly (with replacement) using the given seed; a
    candidate footprint is rejected when its bbox intersects any accepted
    bbox.  Deterministic for a fixed seed.
    """
    if not parcels:
        raise CapacityError("no parcels to sample from", accepted=0)
    if n < 1:
        raise DomainError(f"requested {n} tiles; need n >= 1")
    if max_attempts is None:
        max_attempts = max(1000, 50 * n)
    rng = random.Random(seed)
    accepted: list[TileFootprint] = []
    for _ in range(max_attempts):
        if len(accepted) == n:
            break
        parcel = parcels[rng.randrange(len(parcels))]
        try:
            center = centroid(parcel.polygon)
            bbox = tile_bbox(center, side_m)
        except (DegenerateGeometryError, DomainError):
            continue
        if any(_bboxes_intersect(bbox, t.bbox_deg) for t in accepted):
            continue
        accepted.append(TileFootprint(len(accepted), center, side_m, bbox))
    if len(accepted) < n:
        raise CapacityError(
            f"accepted only {len(accepted)} of {n} non-overlapping tiles "
            f"after {max_attempts} attempts",
            accepted=len(accepted),
        )
    return accepted


def filter_parcels(parcels: list[ParcelRecord], tile: TileFootprint) -> list[ParcelRecord]:
    """Parcels whose outer-ring bbox intersects the tile bbox (no clipping)."""
    return [p for p in parcels if _bboxes_intersect(polygon_bbox(p.polygon), tile.bbox_deg)]


def geo_to_pixel(tile: TileFootprint, g: GeoPoint, size_px: int) -> tuple[int, int]:
    """Map a geographic point into (col, row) pixel space by linear scaling.

    Row grows southward.  Points outside the bbox map to out-of-range
    integers; callers clip at draw time.  Ties round to even.
    """
    lon_min, lat_min, lon_max, lat_max = tile.bbox_deg
    col = round((g.lon_deg - lon_min) / (lon_max - lon_min) * (size_px - 1))
    row = round((lat_max - g.lat_deg) / (lat_max - lat_min) * (size_px - 1))
    return int(col), int(row)
