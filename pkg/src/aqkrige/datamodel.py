"""Sensor catalog, time-aligned reading frames and stationarity preprocessing.

A :class:`ReadingFrame` is a (timestamps x stations) matrix of PM2.5 values.
Missing cells are tracked by an explicit ``present`` mask; the value array
holds NaN at those cells purely as a guard against accidental arithmetic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .exceptions import DataError, InsufficientDataError, ParseError

NETWORKS = ("public", "lowcost")
DEFAULT_STEP = 3600
DEFAULT_CAP = 1000.0
LOG_SHIFT = 0.1

RAW_UNIT = "ug/m3"
DETRENDED_UNIT = "log-detrended"


@dataclass(frozen=True)
class Station:
    id: str
    lat: float
    lon: float
    network: str = "lowcost"

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"station {self.id!r}: latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"station {self.id!r}: longitude {self.lon} out of range")
        if self.network not in NETWORKS:
            raise DataError(f"station {self.id!r}: unknown network {self.network!r}")


@dataclass(frozen=True, eq=False)
class ReadingFrame:
    times: np.ndarray
    stations: tuple
    values: np.ndarray
    present: np.ndarray
    step: int = DEFAULT_STEP
    cap: float = DEFAULT_CAP
    unit: str = RAW_UNIT
    saturated: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        values = np.array(self.values, dtype=float)
        present = np.array(self.present, dtype=bool)
        stations = tuple(self.stations)
        if values.shape != (len(times), len(stations)) or present.shape != values.shape:
            raise DataError(
                f"frame dims {values.shape} do not match "
                f"{len(times)} timestamps x {len(stations)} stations"
            )
        if len(times) > 1 and np.any(np.diff(times) != self.step):
            raise DataError("timestamps must be strictly increasing at a constant step")
        if len({s.id for s in stations}) != len(stations):
            raise DataError("duplicate station id in frame")
        values[~present] = np.nan
        if np.any(~np.isfinite(values[present])):
            raise DataError("present cells must hold finite values")
        if self.unit == RAW_UNIT:
            v = values[present]
            if np.any(v < 0) or np.any(v > self.cap):
                raise DataError(f"raw values must lie in [0, {self.cap}]")
        for arr in (times, values, present):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "stations", stations)

    @property
    def n_times(self):
        return self.values.shape[0]

    @property
    def n_stations(self):
        return self.values.shape[1]

    @property
    def station_ids(self):
        return [s.id for s in self.stations]

    @property
    def lat(self):
        return np.array([s.lat for s in self.stations])

    @property
    def lon(self):
        return np.array([s.lon for s in self.stations])

    def station_index(self, station_id):
        for k, s in enumerate(self.stations):
            if s.id == station_id:
                return k
        raise KeyError(station_id)

    def with_values(self, values, present=None, **changes):
        """Copy of the frame with a new value matrix (and optionally mask)."""
        values = np.asarray(values, dtype=float)
        if present is None:
            present = np.isfinite(values)
        return replace(self, values=values, present=present, **changes)

    def select_stations(self, indices):
        indices = list(indices)
        return replace(
            self,
            stations=tuple(self.stations[k] for k in indices),
            values=self.values[:, indices],
            present=self.present[:, indices],
        )

    def select_times(self, start, stop):
        return replace(
            self,
            times=self.times[start:stop],
            values=self.values[start:stop],
            present=self.present[start:stop],
        )


@dataclass(frozen=True)
class PreprocessState:
    log_applied: bool
    spline_knots: tuple
    spline_coefficients: np.ndarray = field(repr=False)
    shift: float = LOG_SHIFT

    def trend(self, times):
        knots_t = np.array([k[0] for k in self.spline_knots], dtype=float)
        knots_v = np.array([k[1] for k in self.spline_knots], dtype=float)
        spline = CubicSpline(knots_t, knots_v, bc_type="natural")
        return spline(np.asarray(times, dtype=float))


def parse_timestamp(text):
    """ISO-8601 string to integer UTC epoch seconds. Naive stamps are UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(math.floor(dt.timestamp()))


def format_timestamp(epoch):
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _open_csv(path, header):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        first = next(reader)
    except StopIteration:
        fh.close()
        raise ParseError("empty file", path, 1)
    if [c.strip() for c in first] != list(header):
        fh.close()
        raise ParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", path, 1)
    return fh, reader


def read_station_catalog(path):
    """Parse a ``id,lat,lon,network`` catalog; ids must be unique."""
    fh, reader = _open_csv(path, ("id", "lat", "lon", "network"))
    stations = []
    seen = set()
    with fh:
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", path, line)
            sid, lat, lon, network = (c.strip() for c in row)
            if not sid:
                raise ParseError("empty station id", path, line)
            if sid in seen:
                raise ParseError(f"duplicate station id {sid!r}", path, line)
            try:
                station = Station(sid, float(lat), float(lon), network)
            except ValueError as exc:
                raise ParseError(str(exc), path, line) from None
            seen.add(sid)
            stations.append(station)
    if not stations:
        raise ParseError("catalog holds no stations", path)
    return stations


def write_station_catalog(path, stations):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon", "network"])
        for s in stations:
            w.writerow([s.id, repr(float(s.lat)), repr(float(s.lon)), s.network])


def ingest_readings(catalog_file, readings_file, step=DEFAULT_STEP, cap=DEFAULT_CAP):
    """Read a catalog and a long-format readings file into a ReadingFrame.

    Readings are bucketed by ``floor(timestamp / step)``; several readings in
    one bucket are averaged after clamping each to ``cap``. Buckets without
    a reading are missing. The frame spans the first to the last occupied
    bucket.
    """
    step = int(step)
    if step <= 0 or 86400 % step:
        raise DataError(f"step {step} s must be a positive divisor of 86400")
    stations = read_station_catalog(catalog_file)
    index = {s.id: k for k, s in enumerate(stations)}

    buckets, cols, vals = [], [], []
    saturated = 0
    fh, reader = _open_csv(readings_file, ("timestamp", "station_id", "pm25"))
    with fh:
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", readings_file, line)
            ts, sid, pm = (c.strip() for c in row)
            try:
                epoch = parse_timestamp(ts)
            except ValueError:
                raise ParseError(f"bad timestamp {ts!r}", readings_file, line) from None
            if sid not in index:
                raise ParseError(f"unknown station id {sid!r}", readings_file, line)
            try:
                value = float(pm)
            except ValueError:
                raise ParseError(f"bad pm25 value {pm!r}", readings_file, line) from None
            if not math.isfinite(value) or value < 0:
                raise ParseError(f"pm25 must be a finite non-negative number, got {pm!r}",
                                 readings_file, line)
            if value > cap:
                value = cap
                saturated += 1
            buckets.append(epoch // step)
            cols.append(index[sid])
            vals.append(value)
    if not buckets:
        raise InsufficientDataError(f"{readings_file}: no readings")

    buckets = np.asarray(buckets, dtype=np.int64)
    cols = np.asarray(cols)
    vals = np.asarray(vals)
    b0 = buckets.min()
    n_t = int(buckets.max() - b0 + 1)
    sums = np.zeros((n_t, len(stations)))
    counts = np.zeros((n_t, len(stations)), dtype=np.int64)
    np.add.at(sums, (buckets - b0, cols), vals)
    np.add.at(counts, (buckets - b0, cols), 1)
    present = counts > 0
    values = np.full(sums.shape, np.nan)
    values[present] = sums[present] / counts[present]
    times = (b0 + np.arange(n_t)) * step
    return ReadingFrame(times, tuple(stations), values, present, step=step, cap=cap,
                        saturated=saturated)


def write_readings(path, frame):
    """Long-format readings CSV, one row per present cell, time-major."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "station_id", "pm25"])
        ids = frame.station_ids
        for r, t in enumerate(frame.times):
            stamp = format_timestamp(t)
            for c in np.flatnonzero(frame.present[r]):
                w.writerow([stamp, ids[c], repr(float(frame.values[r, c]))])


def write_frame_wide(path, frame):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + frame.station_ids)
        for r, t in enumerate(frame.times):
            row = [format_timestamp(t)]
            for c in range(frame.n_stations):
                row.append(repr(float(frame.values[r, c])) if frame.present[r, c] else "")
            w.writerow(row)


def day_index(times, tz_offset_minutes=0):
    """Integer local calendar day number (days since epoch) for each stamp."""
    local = np.asarray(times, dtype=np.int64) + int(tz_offset_minutes) * 60
    return np.floor_divide(local, 86400)


def preprocess(frame, shift=LOG_SHIFT, tz_offset_minutes=0):
    """Log-transform and subtract a daily natural cubic spline trend.

    Each present cell becomes ``log(value + shift) - S(t)``, where ``S`` is a
    natural cubic spline through one knot per day (placed at local midnight)
    holding the daily mean of the network-average log series.

    Returns
    -------
    (ReadingFrame, PreprocessState)
        The detrended frame (unit tag ``log-detrended``) and the state needed
        by :func:`inverse_preprocess`.
    """
    if frame.unit != RAW_UNIT:
        raise DataError(f"preprocess expects raw concentrations, frame unit is {frame.unit!r}")
    logv = np.where(frame.present, np.log(np.where(frame.present, frame.values, 1.0) + shift), 0.0)
    counts = frame.present.sum(axis=1)
    has = counts > 0
    net_mean = np.zeros(frame.n_times)
    net_mean[has] = logv[has].sum(axis=1) / counts[has]

    days = day_index(frame.times, tz_offset_minutes)
    knot_days = np.unique(days[has])
    if len(knot_days) < 4:
        raise InsufficientDataError(
            f"need at least 4 distinct days with data for the spline trend, got {len(knot_days)}"
        )
    knot_means = np.array([net_mean[has & (days == d)].mean() for d in knot_days])
    knot_times = knot_days * 86400 - int(tz_offset_minutes) * 60
    spline = CubicSpline(knot_times.astype(float), knot_means, bc_type="natural")
    state = PreprocessState(
        log_applied=True,
        spline_knots=tuple((int(t), float(v)) for t, v in zip(knot_times, knot_means)),
        spline_coefficients=spline.c.copy(),
        shift=shift,
    )
    trend = spline(frame.times.astype(float))
    out = np.where(frame.present, logv - trend[:, None], np.nan)
    return frame.with_values(out, frame.present, unit=DETRENDED_UNIT), state


def inverse_preprocess(frame, state):
    if frame.unit != DETRENDED_UNIT:
        raise DataError("inverse_preprocess expects a log-detrended frame")
    trend = state.trend(frame.times)
    raw = np.exp(np.where(frame.present, frame.values, 0.0) + trend[:, None]) - state.shift
    raw = np.where(frame.present, np.clip(raw, 0.0, None), np.nan)
    return frame.with_values(raw, frame.present, unit=RAW_UNIT)


def frame_from_arrays(times, lat, lon, values, ids: Sequence[str] | None = None,
                      networks: Sequence[str] | None = None, step=DEFAULT_STEP,
                      cap=DEFAULT_CAP, unit=RAW_UNIT):
    """Build a frame from plain arrays; NaN marks missing cells."""
    n = len(lat)
    ids = list(ids) if ids is not None else [f"S{k:03d}" for k in range(n)]
    networks = list(networks) if networks is not None else ["lowcost"] * n
    stations = tuple(Station(i, float(a), float(o), w) for i, a, o, w in zip(ids, lat, lon, networks))
    values = np.asarray(values, dtype=float)
    return ReadingFrame(np.asarray(times, dtype=np.int64), stations, values,
                        np.isfinite(values), step=step, cap=cap, unit=unit)
