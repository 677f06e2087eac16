"""Gaussian plume dispersion from a gridded multi-source emissions inventory.

Grid convention: cell ``(i, j)`` spans latitudes ``origin_lat + i*cell_deg``
to ``origin_lat + (i+1)*cell_deg`` and likewise for longitude with ``j``;
``i`` grows northwards, ``j`` eastwards. Wind direction is meteorological
(the bearing the wind blows *from*, clockwise from north).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .datamodel import parse_timestamp
from .exceptions import DataError, ParseError
from .geo import METERS_PER_DEG_LAT, local_offsets

SOURCES = ("b", "i", "p", "d", "v")
SOURCE_NAMES = {
    "b": "brick kilns",
    "i": "industries",
    "p": "power plants",
    "d": "domestic",
    "v": "vehicular",
}
HEIGHT_RANGES = {"b": (22.0, 60.0), "i": (30.0, 60.0), "p": (200.0, 400.0), "d": (0.0, 20.0),
                 "v": (0.0, 3.0)}
DEFAULT_HEIGHTS = {s: 0.5 * (lo + hi) for s, (lo, hi) in HEIGHT_RANGES.items()}
RECEPTOR_Z = 5.0
SOURCE_HALF_WIDTH = 7
SIGMA_FLOOR = 0.1


@dataclass(frozen=True)
class StabilityCoeffs:
    """``sigma_y = a*x**b`` and ``sigma_z = c*x**d + f`` per distance regime.

    ``regimes`` is a sequence of ``(x_max, a, b, c, d, f)`` with ``x_max`` in
    ``distance_unit`` (None for the open-ended last regime). Sigmas are in
    meters and floored at ``SIGMA_FLOOR`` so they stay positive.
    """

    stability_class: str
    regimes: tuple
    distance_unit: str = "km"

    def _params(self, x_m):
        x = np.asarray(x_m, dtype=float) / (1000.0 if self.distance_unit == "km" else 1.0)
        out = np.empty(x.shape + (5,))
        assigned = np.zeros(x.shape, dtype=bool)
        for x_max, *p in self.regimes:
            sel = ~assigned if x_max is None else (~assigned & (x < x_max))
            out[sel] = p
            assigned |= sel
        out[~assigned] = self.regimes[-1][1:]
        return x, out

    def sigma_y(self, x_m):
        x, p = self._params(x_m)
        return np.maximum(p[..., 0] * x ** p[..., 1], SIGMA_FLOOR)

    def sigma_z(self, x_m):
        x, p = self._params(x_m)
        return np.maximum(p[..., 2] * x ** p[..., 3] + p[..., 4], SIGMA_FLOOR)


def load_stability(path=None):
    """Read per-class coefficient records; the bundled Martin table by default."""
    if path is None:
        text = resources.files("aqkrige").joinpath("data/stability_martin.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    unit = raw.get("distance_unit", "km")
    out = {}
    for cls, regimes in raw["classes"].items():
        rows = tuple((r.get("x_max"), r["a"], r["b"], r["c"], r["d"], r["f"]) for r in regimes)
        out[cls] = StabilityCoeffs(cls, rows, unit)
    return out


@lru_cache(maxsize=None)
def stability_class(name):
    table = load_stability()
    if name not in table:
        raise DataError(f"unknown stability class {name!r}; expected one of {sorted(table)}")
    return table[name]


@dataclass(frozen=True)
class PlumeSource:
    Q: float
    H: float
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if self.Q < 0:
            raise DataError("source intensity must be >= 0")


def check_height(source, H):
    lo, hi = HEIGHT_RANGES[source]
    if not lo <= H <= hi:
        raise DataError(f"effective height {H} m for {SOURCE_NAMES[source]} outside [{lo}, {hi}]")


def vertical_term(z, H, sz):
    return np.exp(-((z - H) ** 2) / (2 * sz**2)) + np.exp(-((z + H) ** 2) / (2 * sz**2))


def plume_concentration(src, receptor, U, coeffs, reflection=True):
    """Ground-reflected Gaussian plume concentration at ``receptor``.

    The wind blows along +x; ``receptor`` is ``(x, y, z)`` in meters in the
    same frame as the source position. Receptors not downwind get 0.
    """
    if U <= 0:
        raise DataError("wind speed must be positive (calm conditions are outside the model)")
    x = receptor[0] - src.x
    y = receptor[1] - src.y
    z = receptor[2]
    if x <= 0:
        return 0.0
    sy = float(coeffs.sigma_y(x))
    sz = float(coeffs.sigma_z(x))
    vert = math.exp(-((z - src.H) ** 2) / (2 * sz**2))
    if reflection:
        vert += math.exp(-((z + src.H) ** 2) / (2 * sz**2))
    return src.Q / (2 * math.pi * U * sy * sz) * math.exp(-(y**2) / (2 * sy**2)) * vert


@dataclass(frozen=True, eq=False)
class EmissionGrid:
    origin: tuple
    cell_deg: float
    q: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim == 3:
            q = q[:, :, None, :]
        if q.ndim != 4 or q.shape[-1] != len(SOURCES):
            raise DataError("inventory array must have shape (rows, cols, slots, 5)")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise DataError("emission intensities must be finite and >= 0")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        if self.times is not None:
            times = np.asarray(self.times, dtype=np.int64)
            if len(times) != q.shape[2] or np.any(np.diff(times) <= 0):
                raise DataError("inventory slot times must be increasing, one per slot")
            object.__setattr__(self, "times", times)

    @property
    def n_rows(self):
        return self.q.shape[0]

    @property
    def n_cols(self):
        return self.q.shape[1]

    @property
    def totals(self):
        return {s: float(self.q[..., k].sum()) for k, s in enumerate(SOURCES)}

    def cell_center(self, i, j):
        return (self.origin[0] + (i + 0.5) * self.cell_deg,
                self.origin[1] + (j + 0.5) * self.cell_deg)

    def slot(self, t):
        if self.q.shape[2] == 1 or self.times is None:
            return 0
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return max(k, 0)

    def intensities(self, i, j, t):
        return self.q[i, j, self.slot(t)]


@dataclass(frozen=True, eq=False)
class WindSeries:
    times: np.ndarray
    speed: np.ndarray
    direction: np.ndarray = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        speed = np.asarray(self.speed, dtype=float)
        direction = (np.zeros_like(speed) if self.direction is None
                     else np.asarray(self.direction, dtype=float) % 360.0)
        if not (len(times) == len(speed) == len(direction)) or len(times) == 0:
            raise DataError("wind series arrays must be non-empty and equal length")
        if np.any(np.diff(times) <= 0):
            raise DataError("wind timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "direction", direction)


def wind_at(series, t):
    """Linear speed and shortest-arc direction interpolation at time ``t``."""
    ts = series.times
    if t < ts[0] or t > ts[-1]:
        raise DataError(f"time {t} outside the wind series span [{ts[0]}, {ts[-1]}]")
    k = int(np.searchsorted(ts, t, side="right")) - 1
    if k >= len(ts) - 1:
        return float(series.speed[-1]), float(series.direction[-1])
    w = (t - ts[k]) / (ts[k + 1] - ts[k])
    u = (1 - w) * series.speed[k] + w * series.speed[k + 1]
    d0, d1 = series.direction[k], series.direction[k + 1]
    delta = (d1 - d0 + 180.0) % 360.0 - 180.0
    return float(u), float((d0 + w * delta) % 360.0)


def _downwind_frame(east, north, direction_from):
    theta = math.radians(direction_from)
    to_e, to_n = -math.sin(theta), -math.cos(theta)
    x = east * to_e + north * to_n
    y = east * to_n - north * to_e
    return x, y


def _heights(heights):
    h = dict(DEFAULT_HEIGHTS)
    if heights:
        h.update(heights)
    for s in SOURCES:
        check_height(s, h[s])
    return h


def cell_contribution(grid, cell, t, receptor, wind, coeffs, heights=None, z=RECEPTOR_Z):
    """Concentration at ``receptor`` (lat, lon) from all sources of one cell.

    The five source types sit at the cell center; the frame is rotated so +x
    points downwind of the interpolated wind direction.
    """
    i, j = cell
    q = grid.intensities(i, j, t)
    if not np.any(q):
        return 0.0
    U, direction = wind_at(wind, t)
    if U <= 0:
        raise DataError("wind speed must be positive (calm conditions are outside the model)")
    h = _heights(heights)
    clat, clon = grid.cell_center(i, j)
    east, north = local_offsets(receptor[0], receptor[1], clat, clon)
    x, y = _downwind_frame(float(east), float(north), direction)
    if x <= 0:
        return 0.0
    sy = float(coeffs.sigma_y(x))
    sz = float(coeffs.sigma_z(x))
    vert = sum(q[k] * vertical_term(z, h[s], sz) for k, s in enumerate(SOURCES))
    return float(math.exp(-(y**2) / (2 * sy**2)) / (2 * math.pi * U * sy * sz) * vert)


def source_block(grid, receptor_cell, half_width=SOURCE_HALF_WIDTH):
    ri, rj = receptor_cell
    if not (0 <= ri < grid.n_rows and 0 <= rj < grid.n_cols):
        raise DataError(f"receptor cell {receptor_cell} outside the grid")
    i0, i1 = ri - half_width, ri + half_width + 1
    j0, j1 = rj - half_width, rj + half_width + 1
    if i0 < 0 or j0 < 0 or i1 > grid.n_rows or j1 > grid.n_cols:
        warnings.warn(f"source block around {receptor_cell} truncated at the grid edge",
                      stacklevel=3)
    return range(max(i0, 0), min(i1, grid.n_rows)), range(max(j0, 0), min(j1, grid.n_cols))


def sensor_concentration(grid, receptor_cell, t, wind, coeffs, heights=None, z=RECEPTOR_Z,
                         half_width=SOURCE_HALF_WIDTH):
    """Sum of cell contributions over the 15x15 source block around a receptor."""
    rows, cols = source_block(grid, receptor_cell, half_width)
    receptor = grid.cell_center(*receptor_cell)
    return float(sum(cell_contribution(grid, (i, j), t, receptor, wind, coeffs, heights, z)
                     for i in rows for j in cols))


_AXIS_STEPS = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}


def snap_direction(direction_from):
    return int(90 * round((direction_from % 360.0) / 90.0)) % 360


def sensor_concentration_simplified(grid, receptor_cell, t, wind, scale=1.0,
                                    half_width=SOURCE_HALF_WIDTH):
    """Upwind-axis-only approximation ``scale / (U x^3) * sum_s Q_s``.

    The wind is snapped to the nearest grid axis; only cells on the exact
    upwind row or column inside the source block contribute.
    """
    rows, cols = source_block(grid, receptor_cell, half_width)
    U, direction = wind_at(wind, t)
    if U <= 0:
        raise DataError("wind speed must be positive (calm conditions are outside the model)")
    di, dj = _AXIS_STEPS[snap_direction(direction)]
    ri, rj = receptor_cell
    rlat, _ = grid.cell_center(ri, rj)
    dy = grid.cell_deg * METERS_PER_DEG_LAT
    dx = dy * math.cos(math.radians(rlat))
    step_m = dy if di else dx
    total = 0.0
    for k in range(1, half_width + 1):
        i, j = ri + k * di, rj + k * dj
        if i not in rows or j not in cols:
            break
        x = k * step_m
        total += grid.intensities(i, j, t).sum() / (U * x**3)
    return float(scale * total)


def calibrate_simplified_scale(unit_predictions, observed):
    """Least-squares scale for the simplified model against observed means."""
    g = np.asarray(unit_predictions, dtype=float)
    o = np.asarray(observed, dtype=float)
    denom = float(g @ g)
    if denom == 0:
        raise DataError("simplified model predicts zero everywhere; scale is undetermined")
    return float(g @ o) / denom


def normalize_inventory(grid, totals):
    """Rescale each source type so its grid-wide sum equals ``totals[s]``.

    Source types missing from ``totals`` are left unchanged; a zero total
    zeroes the type.
    """
    q = grid.q.copy()
    for k, s in enumerate(SOURCES):
        if s not in totals:
            continue
        target = float(totals[s])
        if target < 0:
            raise DataError(f"total for source {s!r} must be >= 0")
        current = q[..., k].sum()
        if target == 0:
            q[..., k] = 0.0
        elif current <= 0:
            raise DataError(f"source {s!r} sums to zero but its target total is {target}")
        else:
            q[..., k] *= target / current
    return EmissionGrid(grid.origin, grid.cell_deg, q, grid.times)


def traffic_intensity(orange, red, maroon):
    """Relative traffic emission from congestion counts, weighted 1:2:3."""
    if min(orange, red, maroon) < 0:
        raise DataError("congestion counts must be >= 0")
    return orange + 2 * red + 3 * maroon


INVENTORY_HEADER = ("i", "j", "t", "q_b", "q_i", "q_p", "q_d", "q_v")


def read_inventory(path, origin, cell_deg=0.01, shape=None):
    """Load an ``i,j[,t],q_b,q_i,q_p,q_d,q_v`` CSV; ``t`` is an ISO timestamp."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader, [])]
        timed = tuple(header) == INVENTORY_HEADER
        if not timed and tuple(header) != tuple(h for h in INVENTORY_HEADER if h != "t"):
            raise ParseError(f"unexpected inventory header {','.join(header)!r}", path, 1)
        rows = []
        for row in reader:
            if not row:
                continue
            try:
                i, j = int(row[0]), int(row[1])
                t = parse_timestamp(row[2]) if timed else None
                qs = [float(v) for v in row[3 if timed else 2:]]
            except (ValueError, IndexError):
                raise ParseError("malformed inventory row", path, reader.line_num) from None
            if len(qs) != 5 or i < 0 or j < 0:
                raise ParseError("malformed inventory row", path, reader.line_num)
            rows.append((i, j, t, qs))
    if not rows:
        raise ParseError("inventory is empty", path)
    slots = sorted({r[2] for r in rows}) if timed else [None]
    slot_of = {t: k for k, t in enumerate(slots)}
    n_rows = shape[0] if shape else max(r[0] for r in rows) + 1
    n_cols = shape[1] if shape else max(r[1] for r in rows) + 1
    q = np.zeros((n_rows, n_cols, len(slots), 5))
    for i, j, t, qs in rows:
        if i >= n_rows or j >= n_cols:
            raise DataError(f"inventory cell ({i}, {j}) outside the {n_rows}x{n_cols} grid")
        q[i, j, slot_of[t]] += qs
    times = np.asarray(slots, dtype=np.int64) if timed else None
    return EmissionGrid(tuple(origin), cell_deg, q, times)


def read_wind(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader, [])]
        if header != ["timestamp", "speed_ms", "direction_deg"]:
            raise ParseError("expected header 'timestamp,speed_ms,direction_deg'", path, 1)
        times, speed, direction = [], [], []
        for row in reader:
            if not row:
                continue
            try:
                times.append(parse_timestamp(row[0]))
                speed.append(float(row[1]))
                direction.append(float(row[2]))
            except (ValueError, IndexError):
                raise ParseError("malformed wind row", path, reader.line_num) from None
    order = np.argsort(times, kind="stable")
    return WindSeries(np.asarray(times)[order], np.asarray(speed)[order],
                      np.asarray(direction)[order])
