"""Geographic domain types for parcel data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..errors import DomainError, DegenerateGeometryError


@dataclass(frozen=True)
class GeoPoint:
    """Geographic coordinates in degrees (lon east, lat north)."""

    lon_deg: float
    lat_deg: float

    def __post_init__(self):
        if not (math.isfinite(self.lon_deg) and math.isfinite(self.lat_deg)):
            raise DomainError(f"non-finite geographic coordinate ({self.lon_deg}, {self.lat_deg})")
        if not -180.0 <= self.lon_deg <= 180.0:
            raise DomainError(f"longitude {self.lon_deg} outside [-180, 180]")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise DomainError(f"latitude {self.lat_deg} outside [-90, 90]")


@dataclass(frozen=True)
class LambertPoint:
    """Projected planar coordinates in meters (Lambert-93 / LCC-2SP on GRS80)."""

    easting_m: float
    northing_m: float

    def __post_init__(self):
        if not (math.isfinite(self.easting_m) and math.isfinite(self.northing_m)):
            raise DomainError(f"non-finite projected coordinate ({self.easting_m}, {self.northing_m})")


@dataclass
class PolygonGeo:
    """Polygon in geographic coordinates: one outer ring plus optional holes.

    Rings are stored open (no repeated closing vertex) and must keep at least
    3 distinct vertices each.
    """

    outer: list[GeoPoint]
    holes: list[list[GeoPoint]] = field(default_factory=list)

    @classmethod
    def from_rings(cls, outer, holes=()) -> "PolygonGeo":
        """Build a polygon, normalizing away closing vertices and duplicates."""
        return cls(_normalize_ring(outer), [_normalize_ring(h) for h in holes])


def _normalize_ring(ring) -> list[GeoPoint]:
    pts = [p if isinstance(p, GeoPoint) else GeoPoint(float(p[0]), float(p[1])) for p in ring]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    deduped: list[GeoPoint] = []
    for p in pts:
        if not deduped or p != deduped[-1]:
            deduped.append(p)
    if len(deduped) < 3:
        raise DegenerateGeometryError(f"ring has {len(deduped)} distinct vertices, need >= 3")
    return deduped


@dataclass
class ParcelRecord:
    """One parcel polygon with a store-unique id.

    ``source_id`` keeps the provenance (shapefile record number or GeoJSON
    feature index); several records share it when a multi-part geometry was
    flattened.
    """

    id: int
    polygon: PolygonGeo
    source_id: int | None = None


@dataclass(frozen=True)
class TileFootprint:
    """A square ground region centered on a parcel centroid.

    ``bbox_deg`` is (lon_min, lat_min, lon_max, lat_max), derived
    deterministically from the center by ``tile_bbox``.
    """

    tile_id: int
    center: GeoPoint
    side_m: float
    bbox_deg: tuple[float, float, float, float]
