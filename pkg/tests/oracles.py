"""Independent reference implementations used by the tests.

These are written from the textbook formulas with plain loops and generic
linear algebra so they share no code path with the package.
"""

import math

import numpy as np

EARTH_RADIUS_M = 6371008.8


def great_circle(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def semivariance(family, sill, rng, nugget, alpha, h, dt):
    lag = math.sqrt(h * h + (alpha * dt) ** 2)
    if lag == 0:
        return nugget
    r = lag / rng
    if family == "spherical":
        s = 1.0 if r >= 1 else 1.5 * r - 0.5 * r**3
    elif family == "exponential":
        s = 1.0 - math.exp(-3.0 * r)
    else:
        s = 1.0 - math.exp(-3.0 * r * r)
    return nugget + sill * s


def bordered_kriging(points, values, target, family, sill, rng, nugget=0.0, alpha=0.0):
    """Invert the bordered semivariogram matrix explicitly.

    ``points`` are (lat, lon, t) triples. Zero lag between a point and itself
    is 0, which is what makes a sampled target reproduce its sample.
    """
    n = len(points)
    A = np.zeros((n + 1, n + 1))
    b = np.zeros(n + 1)
    for i in range(n):
        for j in range(n):
            if i != j:
                h = great_circle(points[i][0], points[i][1], points[j][0], points[j][1])
                A[i, j] = semivariance(family, sill, rng, nugget, alpha, h,
                                       abs(points[i][2] - points[j][2]))
        A[i, n] = A[n, i] = 1.0
        same = tuple(points[i]) == tuple(target)
        h0 = great_circle(points[i][0], points[i][1], target[0], target[1])
        b[i] = 0.0 if same else semivariance(family, sill, rng, nugget, alpha, h0,
                                             abs(points[i][2] - target[2]))
    b[n] = 1.0
    x = np.linalg.inv(A) @ b
    lam, mu = x[:n], x[n]
    pred = float(lam @ np.asarray(values))
    var = max(float(lam @ b[:n] + mu), 0.0)
    return lam, float(mu), pred, var


def brute_loo_station(points, values, station_of, family, sill, rng, nugget, alpha, hold, row):
    """Prediction at sample ``row`` with every sample of station ``hold`` removed."""
    keep = [k for k in range(len(points)) if station_of[k] != hold]
    _, _, pred, _ = bordered_kriging([points[k] for k in keep], [values[k] for k in keep],
                                     points[row], family, sill, rng, nugget, alpha)
    return pred
