"""GeoJSON text fallback for parcel polygons (geographic coordinates)."""

from __future__ import annotations

import json

from ..errors import FormatError, UnsupportedFeatureError
from .types import GeoPoint, ParcelRecord, PolygonGeo


def _ring_points(ring, where: str) -> list[GeoPoint]:
    try:
        return [GeoPoint(float(pos[0]), float(pos[1])) for pos in ring]
    except (TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"{where}: ring positions must be [lon, lat] numbers") from exc


def parse_geojson_polygons(text: str) -> list[ParcelRecord]:
    """Parse a FeatureCollection of Polygon/MultiPolygon features.

    MultiPolygons are flattened to one record per part; flattened parts
    share their feature index as ``source_id``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise FormatError("document is not a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise FormatError("FeatureCollection.features must be a list")

    records: list[ParcelRecord] = []
    for f_idx, feature in enumerate(features):
        where = f"features[{f_idx}]"
        geom = feature.get("geometry") if isinstance(feature, dict) else None
        if not isinstance(geom, dict):
            raise FormatError(f"{where}: missing geometry object")
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        if gtype == "Polygon":
            parts = [coords]
        elif gtype == "MultiPolygon":
            parts = coords
        else:
            raise UnsupportedFeatureError(
                f"{where}: geometry type {gtype!r} not supported (Polygon/MultiPolygon only)"
            )
        if not isinstance(parts, list):
            raise FormatError(f"{where}: coordinates must be a list")
        for part in parts:
            if not isinstance(part, list) or not part:
                raise FormatError(f"{where}: polygon must contain at least an outer ring")
            rings = [_ring_points(ring, where) for ring in part]
            records.append(
                ParcelRecord(
                    id=len(records),
                    polygon=PolygonGeo.from_rings(rings[0], rings[1:]),
                    source_id=f_idx,
                )
            )
    return records
