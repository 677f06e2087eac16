"""Great-circle distances and small-area projections on WGS84 coordinates."""

import numpy as np

EARTH_RADIUS_M = 6371008.8
METERS_PER_DEG_LAT = np.pi * EARTH_RADIUS_M / 180.0


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters, numpy-broadcast over the inputs."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def pairwise_haversine(lat, lon):
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    d = haversine(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    np.fill_diagonal(d, 0.0)
    return d


def cross_haversine(lat_a, lon_a, lat_b, lon_b):
    lat_a = np.asarray(lat_a, dtype=float)
    lon_a = np.asarray(lon_a, dtype=float)
    lat_b = np.asarray(lat_b, dtype=float)
    lon_b = np.asarray(lon_b, dtype=float)
    return haversine(lat_a[:, None], lon_a[:, None], lat_b[None, :], lon_b[None, :])


def local_offsets(lat, lon, lat0, lon0):
    """East/north offsets in meters of points from a reference point.

    Equirectangular projection at the reference latitude; adequate at city
    scale (tens of km).
    """
    east = (np.asarray(lon) - lon0) * METERS_PER_DEG_LAT * np.cos(np.radians(lat0))
    north = (np.asarray(lat) - lat0) * METERS_PER_DEG_LAT
    return east, north


def offset_to_latlon(east, north, lat0, lon0):
    lat = lat0 + np.asarray(north) / METERS_PER_DEG_LAT
    lon = lon0 + np.asarray(east) / (METERS_PER_DEG_LAT * np.cos(np.radians(lat0)))
    return lat, lon
