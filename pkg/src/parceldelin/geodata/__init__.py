"""Cadastral vector ingestion: parsing, projection, tile sampling, pixel mapping."""

from .types import GeoPoint, LambertPoint, PolygonGeo, ParcelRecord, TileFootprint
from .projection import lambert93_to_wgs84, wgs84_to_lambert93
from .shapefile import parse_shapefile, read_polygon_shapes, write_shapefile, parcels_to_shapes
from .geojson import parse_geojson_polygons
from .tiles import (
    centroid,
    tile_bbox,
    sample_tile_centers,
    filter_parcels,
    geo_to_pixel,
    polygon_bbox,
)

__all__ = [
    "GeoPoint",
    "LambertPoint",
    "PolygonGeo",
    "ParcelRecord",
    "TileFootprint",
    "lambert93_to_wgs84",
    "wgs84_to_lambert93",
    "parse_shapefile",
    "read_polygon_shapes",
    "write_shapefile",
    "parcels_to_shapes",
    "parse_geojson_polygons",
    "centroid",
    "tile_bbox",
    "sample_tile_centers",
    "filter_parcels",
    "geo_to_pixel",
    "polygon_bbox",
]
