"""Gridded pollution fields, exceedance levels, hotspot outlines and exposure rasters.

Rasters are stored south-to-north: row 0 is the southernmost row of cells.
PNG output flips them so north is up.
"""

from __future__ import annotations

import calendar
import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from datetime import timedelta

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.special import ndtr
from skimage.measure import find_contours
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import hotspot as hs
from .datamodel import day_index
from .exceptions import DataError, InsufficientDataError
from .kriging import interpolate_series

# Linear ramp stops (position, RGB), light yellow through orange and red to dark red.
COLOR_RAMP = (
    (0.0, (255, 255, 204)),
    (0.33, (254, 178, 76)),
    (0.66, (240, 59, 32)),
    (1.0, (128, 0, 38)),
)
MISSING_RGB = (160, 160, 160)


def grid_shape(bbox, cell_deg):
    lat_min, lat_max, lon_min, lon_max = bbox
    if not (lat_max > lat_min and lon_max > lon_min and cell_deg > 0):
        raise DataError(f"invalid bbox {bbox} or cell size {cell_deg}")
    n_rows = int(round((lat_max - lat_min) / cell_deg))
    n_cols = int(round((lon_max - lon_min) / cell_deg))
    if n_rows < 1 or n_cols < 1:
        raise DataError("bbox is smaller than one cell")
    return n_rows, n_cols


def cell_centers(bbox, cell_deg):
    n_rows, n_cols = grid_shape(bbox, cell_deg)
    lat = bbox[0] + (np.arange(n_rows) + 0.5) * cell_deg
    lon = bbox[2] + (np.arange(n_cols) + 0.5) * cell_deg
    return lat, lon


@dataclass(frozen=True, eq=False)
class GridField:
    bbox: tuple
    cell_deg: float
    values: np.ndarray
    timestamp: int | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != grid_shape(self.bbox, self.cell_deg):
            raise DataError(f"values shape {values.shape} inconsistent with bbox/cell size")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bbox", tuple(float(b) for b in self.bbox))

    def same_grid(self, other):
        return (np.allclose(self.bbox, other.bbox) and np.isclose(self.cell_deg, other.cell_deg)
                and self.values.shape == other.values.shape)


@dataclass(frozen=True, eq=False)
class ExceedanceField:
    phi: np.ndarray
    f: np.ndarray


def _targets(bbox, cell_deg):
    lat, lon = cell_centers(bbox, cell_deg)
    glat, glon = np.meshgrid(lat, lon, indexing="ij")
    return glat.ravel(), glon.ravel()


def render_field(frame, t_index, model, window=7, bbox=None, cell_deg=0.01, refit=False):
    """Kriging prediction at every cell center of ``bbox`` for one timestep."""
    fields = render_fields(frame, model, window, bbox, cell_deg, refit, t_indices=[t_index])
    if np.isnan(fields[0].values).all():
        raise InsufficientDataError(f"no samples inside the window around timestep {t_index}")
    return fields[0]


def render_fields(frame, model, window=7, bbox=None, cell_deg=0.01, refit=False, t_indices=None,
                  n_jobs=1):
    if bbox is None:
        bbox = station_bbox(frame, cell_deg)
    shape = grid_shape(bbox, cell_deg)
    glat, glon = _targets(bbox, cell_deg)
    if t_indices is None:
        t_indices = range(frame.n_times)
    t_indices = list(t_indices)
    preds, _ = interpolate_series(frame, glat, glon, model, window, refit, t_indices=t_indices,
                                  n_jobs=n_jobs)
    return [GridField(bbox, cell_deg, preds[k].reshape(shape), int(frame.times[t]))
            for k, t in enumerate(t_indices)]


def station_bbox(frame, cell_deg=0.01, pad_cells=1):
    """Cell-aligned bbox covering all stations with a margin."""
    lo_lat = np.floor(frame.lat.min() / cell_deg - pad_cells) * cell_deg
    hi_lat = np.ceil(frame.lat.max() / cell_deg + pad_cells) * cell_deg
    lo_lon = np.floor(frame.lon.min() / cell_deg - pad_cells) * cell_deg
    hi_lon = np.ceil(frame.lon.max() / cell_deg + pad_cells) * cell_deg
    return (float(lo_lat), float(hi_lat), float(lo_lon), float(hi_lon))


class ExceedanceKDE(TransformerMixin, BaseEstimator):
    """Upper-tail probability ``1 - CDF`` under a 1-D Gaussian KDE.

    The bandwidth follows Scott's rule, ``n**(-1/5) * std`` (unbiased std).
    ``fit`` and ``transform`` accept arrays of any shape; values are
    flattened for fitting and the input shape is kept on transform.
    """

    def __init__(self, chunk_size=2048):
        self.chunk_size = chunk_size

    def fit(self, X, y=None):
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1), dtype=float).ravel()
        if len(x) < 2 or np.ptp(x) == 0:
            raise DataError("exceedance needs at least two distinct values")
        self.sample_ = np.sort(x)
        self.bandwidth_ = len(x) ** (-0.2) * float(np.std(x, ddof=1))
        return self

    def cdf(self, X):
        check_is_fitted(self, "bandwidth_")
        v = np.asarray(X, dtype=float)
        flat = v.ravel()
        out = np.empty(flat.shape)
        for start in range(0, len(flat), self.chunk_size):
            block = flat[start:start + self.chunk_size]
            z = (block[:, None] - self.sample_[None, :]) / self.bandwidth_
            out[start:start + self.chunk_size] = ndtr(z).mean(axis=1)
        return np.clip(out, 0.0, 1.0).reshape(v.shape)

    def transform(self, X):
        return 1.0 - self.cdf(X)


def exceedance(field):
    """Exceedance level ``f = 1 - Phi`` of each cell within its own field."""
    values = field.values if isinstance(field, GridField) else np.asarray(field, dtype=float)
    finite = np.isfinite(values)
    kde = ExceedanceKDE().fit(values[finite])
    phi = np.full(values.shape, np.nan)
    phi[finite] = kde.cdf(values[finite])
    return ExceedanceField(phi, 1.0 - phi)


@dataclass(frozen=True, eq=False)
class Boundary:
    mask: np.ndarray
    outlines: list
    threshold: float


def boundary(exc, threshold, bbox=None, cell_deg=None):
    """High-pollution region ``f <= threshold`` and its closed outlines.

    Outlines come from marching squares at level 0.5 on the zero-padded
    mask, so every contour is closed. With ``bbox``/``cell_deg`` the
    vertices are (lat, lon); otherwise fractional (row, col) indices.
    """
    if not 0.0 < threshold < 1.0:
        raise DataError("threshold must lie in (0, 1)")
    f = exc.f if isinstance(exc, ExceedanceField) else np.asarray(exc, dtype=float)
    mask = np.isfinite(f) & (f <= threshold)
    outlines = []
    if mask.any():
        padded = np.pad(mask.astype(float), 1)
        for contour in find_contours(padded, 0.5):
            rc = contour - 1.0
            if bbox is not None:
                lat = bbox[0] + (rc[:, 0] + 0.5) * cell_deg
                lon = bbox[2] + (rc[:, 1] + 0.5) * cell_deg
                rc = np.column_stack([lat, lon])
            outlines.append(rc)
    return Boundary(mask, outlines, threshold)


def components(mask):
    labels, n = ndimage.label(mask)
    return labels, n


def write_boundary(path, result):
    doc = {
        "threshold": result.threshold,
        "vertex_order": ["lat", "lon"],
        "polygons": [[[round(float(a), 9), round(float(b), 9)] for a, b in poly]
                     for poly in result.outlines],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


@dataclass(frozen=True, eq=False)
class FrequencyRaster:
    counts: np.ndarray
    months: tuple
    partial_months: tuple


def _month_of_day(day):
    return hs.month_key(hs._EPOCH + timedelta(days=int(day)))


def hotspot_frequency(fields, rules=hs.DEFAULT_RULES, tz_offset_minutes=0, step=3600):
    """Per cell, the number of months in which any monthly hotspot rule fires.

    ``fields`` is a time-ordered sequence of GridFields on one grid at a
    constant ``step``. Months not fully covered by the sequence are counted
    but reported in ``partial_months``.
    """
    fields = list(fields)
    if not fields:
        raise DataError("hotspot_frequency needs at least one field")
    ref = fields[0]
    if any(not f.same_grid(ref) for f in fields) or any(f.timestamp is None for f in fields):
        raise DataError("fields must share one grid and carry timestamps")
    times = np.array([f.timestamp for f in fields], dtype=np.int64)
    if len(times) > 1 and np.any(np.diff(times) != step):
        raise DataError("fields must be evenly spaced at the given step")
    stack = np.stack([f.values for f in fields])
    counts = np.zeros(ref.values.shape, dtype=int)
    months = set()
    for r in range(stack.shape[1]):
        for c in range(stack.shape[2]):
            res = hs.classify_series(times, stack[:, r, c], rules=rules,
                                     tz_offset_minutes=tz_offset_minutes, step=step)
            for m in res.months:
                months.add(m.period)
                counts[r, c] += m.is_hotspot

    days = day_index(times, tz_offset_minutes)
    per_month = defaultdict(int)
    for k in range(len(times)):
        per_month[_month_of_day(days[k])] += 1
    partial = []
    for month, n in per_month.items():
        year, mon = map(int, month.split("-"))
        if n < calendar.monthrange(year, mon)[1] * 86400 // step:
            partial.append(month)
    return FrequencyRaster(counts, tuple(sorted(months)), tuple(sorted(partial)))


def _minmax(a):
    a = np.asarray(a, dtype=float)
    lo, hi = np.nanmin(a), np.nanmax(a)
    if hi > lo:
        return (a - lo) / (hi - lo)
    return np.where(a > 0, 1.0, 0.0)


def exposure_map(freq, population):
    """Elementwise product of the min-max normalised rasters, in [0, 1].

    A constant raster normalises to 1 where positive and 0 otherwise.
    """
    if isinstance(freq, GridField) and isinstance(population, GridField):
        if not freq.same_grid(population):
            raise DataError("frequency and population rasters are not co-registered")
    f = freq.values if isinstance(freq, GridField) else np.asarray(freq, dtype=float)
    p = population.values if isinstance(population, GridField) else np.asarray(population,
                                                                                dtype=float)
    if f.shape != p.shape:
        raise DataError(f"raster shapes differ: {f.shape} vs {p.shape}")
    return _minmax(f) * _minmax(p)


def write_grid_csv(path, values, bbox, cell_deg):
    values = np.asarray(values, dtype=float)
    lat, lon = cell_centers(bbox, cell_deg)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "lat", "lon", "value"])
        for r in range(values.shape[0]):
            for c in range(values.shape[1]):
                v = values[r, c]
                w.writerow([r, c, f"{lat[r]:.6f}", f"{lon[c]:.6f}",
                            "" if not np.isfinite(v) else repr(float(v))])


def read_grid_csv(path, value_column="value"):
    """Read a row/col raster; returns the array (NaN where empty)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"row", "col", value_column} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns row,col,{value_column}")
        cells = [(int(r["row"]), int(r["col"]), r[value_column]) for r in reader]
    if not cells:
        raise DataError(f"{path}: empty raster")
    n_rows = max(c[0] for c in cells) + 1
    n_cols = max(c[1] for c in cells) + 1
    out = np.full((n_rows, n_cols), np.nan)
    for r, c, v in cells:
        out[r, c] = float(v) if v.strip() else np.nan
    return out


def read_grid_field(path, value_column="value", cell_deg=None):
    """Read a raster written by :func:`write_grid_csv` back into a GridField.

    The cell size is recovered from the center coordinates unless given;
    a single-cell raster needs it explicitly.
    """
    values = read_grid_csv(path, value_column)
    with open(path, newline="", encoding="utf-8") as fh:
        centers = {(int(r["row"]), int(r["col"])): (float(r["lat"]), float(r["lon"]))
                   for r in csv.DictReader(fh)}
    lat0, lon0 = centers[(0, 0)]
    if cell_deg is None:
        n_rows, n_cols = values.shape
        if n_rows > 1:
            cell_deg = (centers[(n_rows - 1, 0)][0] - lat0) / (n_rows - 1)
        elif n_cols > 1:
            cell_deg = (centers[(0, n_cols - 1)][1] - lon0) / (n_cols - 1)
        else:
            raise DataError(f"{path}: single-cell raster; pass the cell size explicitly")
        cell_deg = round(cell_deg, 9)
    bbox = (lat0 - cell_deg / 2, lat0 + (values.shape[0] - 0.5) * cell_deg,
            lon0 - cell_deg / 2, lon0 + (values.shape[1] - 0.5) * cell_deg)
    return GridField(tuple(round(b, 9) for b in bbox), cell_deg, values)


def read_population_csv(path):
    return read_grid_csv(path, "density")


def colorize(values, vmin, vmax):
    """Map values to RGB through ``COLOR_RAMP``; NaN cells are gray."""
    values = np.asarray(values, dtype=float)
    if not vmax > vmin:
        raise DataError("vmax must exceed vmin")
    pos = np.clip((values - vmin) / (vmax - vmin), 0.0, 1.0)
    stops = np.array([s[0] for s in COLOR_RAMP])
    rgb = np.empty(values.shape + (3,))
    for ch in range(3):
        rgb[..., ch] = np.interp(pos, stops, [s[1][ch] for s in COLOR_RAMP])
    rgb[~np.isfinite(values)] = MISSING_RGB
    return np.round(rgb).astype(np.uint8)


def write_png(path, values, vmin, vmax, scale=8):
    rgb = colorize(values, vmin, vmax)[::-1]
    img = Image.fromarray(rgb, mode="RGB")
    if scale > 1:
        img = img.resize((rgb.shape[1] * scale, rgb.shape[0] * scale), Image.NEAREST)
    img.save(path, format="PNG", optimize=False)
