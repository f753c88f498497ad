"""Lambert-93 (Lambert conformal conic, 2 standard parallels, GRS80) <-> WGS84.

Fixed national parameter set: standard parallels 44N/49N, origin 46.5N 3E,
false easting 700 000 m, false northing 6 600 000 m.  Inputs are validated
against a box covering metropolitan France with margin:
easting in [0, 1 300 000] m, northing in [6 000 000, 7 200 000] m.
"""

from __future__ import annotations

import math

from ..errors import DomainError
from .types import GeoPoint, LambertPoint

_A = 6378137.0                     # GRS80 semi-major axis, m
_INV_F = 298.257222101
_F = 1.0 / _INV_F
_E2 = _F * (2.0 - _F)
_E = math.sqrt(_E2)

_LAT1 = math.radians(44.0)
_LAT2 = math.radians(49.0)
_LAT0 = math.radians(46.5)
_LON0 = math.radians(3.0)
_E0 = 700000.0
_N0 = 6600000.0

EASTING_RANGE = (0.0, 1300000.0)
NORTHING_RANGE = (6000000.0, 7200000.0)


def _t(lat: float) -> float:
    s = _E * math.sin(lat)
    return math.tan(math.pi / 4.0 - lat / 2.0) / ((1.0 - s) / (1.0 + s)) ** (_E / 2.0)


def _m(lat: float) -> float:
    s = math.sin(lat)
    return math.cos(lat) / math.sqrt(1.0 - _E2 * s * s)


_N_CONE = (math.log(_m(_LAT1)) - math.log(_m(_LAT2))) / (math.log(_t(_LAT1)) - math.log(_t(_LAT2)))
_F_SCALE = _m(_LAT1) / (_N_CONE * _t(_LAT1) ** _N_CONE)
_RHO0 = _A * _F_SCALE * _t(_LAT0) ** _N_CONE


def wgs84_to_lambert93(g: GeoPoint) -> LambertPoint:
    """Forward projection. Poles are outside the domain."""
    if abs(g.lat_deg) >= 90.0:
        raise DomainError(f"latitude {g.lat_deg} is at/beyond a pole; forward projection undefined")
    lat = math.radians(g.lat_deg)
    lon = math.radians(g.lon_deg)
    rho = _A * _F_SCALE * _t(lat) ** _N_CONE
    gamma = _N_CONE * (lon - _LON0)
    return LambertPoint(_E0 + rho * math.sin(gamma), _N0 + _RHO0 - rho * math.cos(gamma))


def lambert93_to_wgs84(p: LambertPoint) -> GeoPoint:
    """Inverse projection for points inside the validity box."""
    if not EASTING_RANGE[0] <= p.easting_m <= EASTING_RANGE[1]:
        raise DomainError(
            f"easting {p.easting_m} outside validity range {EASTING_RANGE}"
        )
    if not NORTHING_RANGE[0] <= p.northing_m <= NORTHING_RANGE[1]:
        raise DomainError(
            f"northing {p.northing_m} outside validity range {NORTHING_RANGE}"
        )
    x = p.easting_m - _E0
    y = _RHO0 - (p.northing_m - _N0)
    rho = math.hypot(x, y)
    gamma = math.atan2(x, y)
    lon = gamma / _N_CONE + _LON0
    t_prime = (rho / (_A * _F_SCALE)) ** (1.0 / _N_CONE)
    # fixed point: lat = pi/2 - 2 atan(t' * ((1 - e sin lat)/(1 + e sin lat))^(e/2))
    lat = math.pi / 2.0 - 2.0 * math.atan(t_prime)
    for _ in range(30):
        s = _E * math.sin(lat)
        new = math.pi / 2.0 - 2.0 * math.atan(t_prime * ((1.0 - s) / (1.0 + s)) ** (_E / 2.0))
        if abs(new - lat) < 1e-14:
            lat = new
            break
        lat = new
    return GeoPoint(math.degrees(lon), math.degrees(lat))
