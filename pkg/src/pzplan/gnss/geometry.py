"""WGS-84 frame conversions and local elevation/azimuth."""

from __future__ import annotations

import math

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1 / 298.257223563
WGS84_E2 = WGS84_F * (2 - WGS84_F)


def geodetic_to_ecef(lat_deg: float, lon_deg: float, alt: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    n = WGS84_A / math.sqrt(1 - WGS84_E2 * math.sin(lat) ** 2)
    return np.array(
        [
            (n + alt) * math.cos(lat) * math.cos(lon),
            (n + alt) * math.cos(lat) * math.sin(lon),
            (n * (1 - WGS84_E2) + alt) * math.sin(lat),
        ]
    )


def enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rows are the east, north and up unit vectors in ECEF."""
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([[-so, co, 0.0], [-sl * co, -sl * so, cl], [cl * co, cl * so, sl]])


def ecef_to_enu(ecef, anchor) -> np.ndarray:
    """ENU coordinates relative to a geodetic anchor ``(lat_deg, lon_deg, alt_m)``."""
    origin = geodetic_to_ecef(*anchor)
    return (np.asarray(ecef, dtype=float) - origin) @ enu_rotation(anchor[0], anchor[1]).T


def elevation_azimuth(receiver_enu, sat_enu) -> tuple[float, float]:
    """Elevation and azimuth (north-referenced, clockwise), radians."""
    d = np.asarray(sat_enu, dtype=float) - np.asarray(receiver_enu, dtype=float)
    el = math.atan2(d[2], math.hypot(d[0], d[1]))
    az = math.atan2(d[0], d[1]) % (2 * math.pi)
    return el, az
