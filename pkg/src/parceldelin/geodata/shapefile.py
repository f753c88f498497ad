"""Minimal ESRI shapefile (.shp) reader/writer for Polygon geometry.

Only the main-file geometry is handled: big-endian file code 9994 at offset
0, little-endian shape type 5 at offset 32, record structure per the 1998
published layout.  Attribute (.dbf) and projection (.prj) sidecars are
ignored; coordinates are taken to be Lambert-93 meters.

``read_polygon_shapes``/``write_shapefile`` work on verbatim coordinate
rings (bit-exact round trip); ``parse_shapefile`` additionally classifies
rings by winding (clockwise = outer, counterclockwise = hole), flattens
multi-part records, and converts to geographic coordinates.
"""

from __future__ import annotations

import struct

from ..errors import FormatError, UnsupportedFeatureError
from .projection import lambert93_to_wgs84
from .types import LambertPoint, ParcelRecord, PolygonGeo

FILE_CODE = 9994
VERSION = 1000
SHAPE_NULL = 0
SHAPE_POLYGON = 5

_HEADER_LEN = 100


def _ring_signed_area(ring) -> float:
    a = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def _check_header(data: bytes, what: str) -> int:
    if len(data) < _HEADER_LEN:
        raise FormatError(f"{what} shorter than the 100-byte header ({len(data)} bytes)")
    (code,) = struct.unpack_from(">i", data, 0)
    if code != FILE_CODE:
        raise FormatError(f"{what} has bad magic {code}, expected {FILE_CODE}")
    (shape_type,) = struct.unpack_from("<i", data, 32)
    return shape_type


def read_polygon_shapes(data: bytes) -> list[tuple[int, list[list[tuple[float, float]]]]]:
    """Decode all polygon records to (record_number, rings) with verbatim rings.

    Null-shape records are skipped; any other shape type is rejected.
    """
    shape_type = _check_header(data, "shapefile")
    if shape_type != SHAPE_POLYGON:
        raise UnsupportedFeatureError(
            f"shapefile declares shape type {shape_type}; only Polygon (5) is supported"
        )
    shapes = []
    offset = _HEADER_LEN
    index = 0
    while offset < len(data):
        index += 1
        try:
            rec_no, content_words = struct.unpack_from(">ii", data, offset)
        except struct.error as exc:
            raise FormatError(f"truncated record header at record {index}") from exc
        offset += 8
        content_end = offset + content_words * 2
        if content_end > len(data):
            raise FormatError(f"truncated record {index}: content runs past end of file")
        try:
            (rec_type,) = struct.unpack_from("<i", data, offset)
            if rec_type == SHAPE_NULL:
                offset = content_end
                continue
            if rec_type != SHAPE_POLYGON:
                raise UnsupportedFeatureError(
                    f"record {index} has shape type {rec_type}; only Polygon (5) is supported"
                )
            num_parts, num_points = struct.unpack_from("<ii", data, offset + 36)
            parts = struct.unpack_from(f"<{num_parts}i", data, offset + 44)
            coords_off = offset + 44 + 4 * num_parts
            flat = struct.unpack_from(f"<{2 * num_points}d", data, coords_off)
            if coords_off + 16 * num_points > content_end:
                raise FormatError(f"truncated record {index}: points run past declared length")
        except struct.error as exc:
            raise FormatError(f"truncated record {index}") from exc
        points = [(flat[2 * i], flat[2 * i + 1]) for i in range(num_points)]
        rings = []
        for p in range(num_parts):
            start = parts[p]
            end = parts[p + 1] if p + 1 < num_parts else num_points
            if not 0 <= start < end <= num_points:
                raise FormatError(f"record {index}: bad part index range [{start}, {end})")
            rings.append(points[start:end])
        shapes.append((rec_no, rings))
        offset = content_end
    return shapes


def parse_shapefile(main_file: bytes, index_optional: bytes | None = None) -> list[ParcelRecord]:
    """Parse Polygon records into ParcelRecords in geographic coordinates.

    Ring winding on the Lambert plane decides roles: clockwise (negative
    shoelace area) opens a new parcel, counterclockwise rings become holes
    of the parcel opened last.  Each outer ring yields one ParcelRecord.
    """
    if index_optional is not None:
        _check_header(index_optional, "shapefile index")
    records: list[ParcelRecord] = []
    for rec_no, rings in read_polygon_shapes(main_file):
        current: list[list] | None = None  # [outer, hole, ...] in Lambert coords
        groups = []
        for ring in rings:
            area = _ring_signed_area(ring)
            if area == 0.0:
                raise FormatError(f"record {rec_no}: degenerate zero-area ring")
            if area < 0.0:  # clockwise -> outer
                current = [ring]
                groups.append(current)
            else:
                if current is None:
                    raise FormatError(f"record {rec_no}: hole ring before any outer ring")
                current.append(ring)
        for group in groups:
            geo_rings = [
                [lambert93_to_wgs84(LambertPoint(x, y)) for x, y in ring] for ring in group
            ]
            records.append(
                ParcelRecord(
                    id=len(records),
                    polygon=PolygonGeo.from_rings(geo_rings[0], geo_rings[1:]),
                    source_id=rec_no,
                )
            )
    return records


def write_shapefile(shapes: list[list[list[tuple[float, float]]]], close_rings: bool = True) -> bytes:
    """Emit a Polygon .shp file from Lambert-plane rings (test/tooling helper).

    ``shapes`` is a list of records, each a list of rings of (x, y).  With
    ``close_rings`` the first vertex is appended to any open ring, as the
    format requires; already-closed rings pass through verbatim.
    """
    out = bytearray(_HEADER_LEN)
    all_x: list[float] = []
    all_y: list[float] = []
    for rec_no, rings in enumerate(shapes, start=1):
        rings = [list(r) for r in rings]
        if close_rings:
            rings = [r if r and tuple(r[0]) == tuple(r[-1]) else r + [r[0]] for r in rings]
        points = [pt for ring in rings for pt in ring]
        parts = []
        acc = 0
        for ring in rings:
            parts.append(acc)
            acc += len(ring)
        xs = [float(p[0]) for p in points]
        ys = [float(p[1]) for p in points]
        all_x += xs
        all_y += ys
        content = struct.pack("<i", SHAPE_POLYGON)
        content += struct.pack("<4d", min(xs), min(ys), max(xs), max(ys))
        content += struct.pack("<ii", len(parts), len(points))
        content += struct.pack(f"<{len(parts)}i", *parts)
        content += b"".join(struct.pack("<2d", x, y) for x, y in zip(xs, ys))
        out += struct.pack(">ii", rec_no, len(content) // 2)
        out += content
    struct.pack_into(">i", out, 0, FILE_CODE)
    struct.pack_into(">i", out, 24, len(out) // 2)
    struct.pack_into("<i", out, 28, VERSION)
    struct.pack_into("<i", out, 32, SHAPE_POLYGON)
    bbox = (min(all_x), min(all_y), max(all_x), max(all_y)) if all_x else (0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<4d", out, 36, *bbox)
    struct.pack_into("<4d", out, 68, 0.0, 0.0, 0.0, 0.0)
    return bytes(out)


def parcels_to_shapes(records: list[ParcelRecord]) -> list[list[list[tuple[float, float]]]]:
    """Project ParcelRecords back to Lambert rings with conformant winding."""
    from .projection import wgs84_to_lambert93

    shapes = []
    for rec in records:
        rings = []
        for i, ring in enumerate([rec.polygon.outer] + rec.polygon.holes):
            pts = [wgs84_to_lambert93(p) for p in ring]
            xy = [(p.easting_m, p.northing_m) for p in pts]
            area = _ring_signed_area(xy)
            want_clockwise = i == 0
            if (area < 0.0) != want_clockwise:
                xy.reverse()
            rings.append(xy)
        shapes.append(rings)
    return shapes
