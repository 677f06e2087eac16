"""Synthetic sensor networks with known ground truth.

Two generators live here. :func:`synth_field` draws an exact Gaussian
process over (station x time) from a space-time variogram; it is the oracle
for the interpolation tests and is limited by dense factorisation to a few
thousand cells. :func:`planted_hotspot_network` builds months of hourly
data with persistent and episodic hotspots planted at known places, for the
hotspot-retrieval experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .. import variogram as vg
from ..datamodel import DEFAULT_CAP, RAW_UNIT, Station, ReadingFrame, parse_timestamp
from ..exceptions import DataError
from ..geo import local_offsets, offset_to_latlon, pairwise_haversine

SYNTHETIC_UNIT = "synthetic"
MAX_STATIONS = 500
MAX_CELLS = 6000
DEFAULT_CENTER = (28.60, 77.20)


def random_layout(n_stations, extent_m, rng, center=DEFAULT_CENTER):
    """Uniform station positions in a square of side ``extent_m`` around ``center``."""
    east = rng.uniform(-extent_m / 2, extent_m / 2, n_stations)
    north = rng.uniform(-extent_m / 2, extent_m / 2, n_stations)
    return offset_to_latlon(east, north, *center)


@dataclass(frozen=True, eq=False)
class SyntheticFieldSpec:
    """Parameters of a Gaussian-process draw.

    Either give explicit ``lat``/``lon`` or ``n_stations`` with
    ``extent_m`` (stations then placed uniformly using the seed).
    """

    variogram: vg.VariogramModel
    n_steps: int
    n_stations: int = 30
    extent_m: float = 30000.0
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None
    step: int = 3600
    start: int = 1546300800
    mean: float = 0.0
    noise_sd: float = 0.0
    exponentiate: bool = False
    seed: int = 0
    network: str = "lowcost"


@dataclass(frozen=True, eq=False)
class SyntheticField:
    frame: ReadingFrame
    truth: np.ndarray
    spec: SyntheticFieldSpec = field(repr=False)


def space_time_covariance(model, lat, lon, times):
    """Covariance ``C(0) - gamma`` over station-major (station, time) cells."""
    n_s, n_t = len(lat), len(times)
    dist = pairwise_haversine(lat, lon)
    tt = np.asarray(times, dtype=float)
    h = np.repeat(np.repeat(dist, n_t, axis=0), n_t, axis=1)
    dt = np.abs(np.tile(tt[:, None] - tt[None, :], (n_s, n_s)))
    gamma = np.asarray(vg.evaluate(model, h, dt))
    np.fill_diagonal(gamma, 0.0)
    return model.total_sill - gamma


def synth_field(spec):
    """Draw one realisation; identical specs give byte-identical output."""
    rng = np.random.default_rng(spec.seed)
    if spec.lat is None:
        lat, lon = random_layout(spec.n_stations, spec.extent_m, rng)
    else:
        lat, lon = np.asarray(spec.lat, dtype=float), np.asarray(spec.lon, dtype=float)
    n_s, n_t = len(lat), int(spec.n_steps)
    if n_s > MAX_STATIONS:
        raise DataError(f"synth_field supports at most {MAX_STATIONS} stations")
    if n_s * n_t > MAX_CELLS:
        raise DataError(f"{n_s} stations x {n_t} steps exceeds {MAX_CELLS} cells")
    times = spec.start + np.arange(n_t, dtype=np.int64) * spec.step
    cov = space_time_covariance(spec.variogram, lat, lon, times - times[0])
    jitter = 0.0
    for _ in range(4):
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(len(cov)))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-10 * spec.variogram.total_sill if jitter == 0 else jitter * 100
    else:
        raise DataError("space-time covariance is not positive definite even after jitter")
    draw = chol @ rng.standard_normal(len(cov))
    truth = spec.mean + draw.reshape(n_s, n_t).T
    obs = truth + spec.noise_sd * rng.standard_normal(truth.shape)
    unit = SYNTHETIC_UNIT
    cap = DEFAULT_CAP
    if spec.exponentiate:
        truth, obs = np.exp(truth), np.exp(obs)
        obs = np.minimum(obs, cap)
        unit = RAW_UNIT
    stations = tuple(Station(f"S{k:03d}", float(a), float(o), spec.network)
                     for k, (a, o) in enumerate(zip(lat, lon)))
    frame = ReadingFrame(times, stations, obs, np.ones(obs.shape, dtype=bool), step=spec.step,
                         cap=cap, unit=unit)
    return SyntheticField(frame, truth, spec)


@dataclass(frozen=True)
class PlantedNetworkSpec:
    n_stations: int = 40
    extent_m: float = 24000.0
    start: str = "2019-11-01T00:00:00Z"
    n_days: int = 61
    background: float = 35.0
    n_persistent: int = 1
    n_episodic: int = 2
    blob_sd_m: float = 3500.0
    persistent_amplitude: float = 110.0
    episodic_amplitude: float = 140.0
    episode_days: int = 4
    smooth_sd: float = 8.0
    noise_sd: float = 3.0
    missing_fraction: float = 0.02
    public_fraction: float = 0.5
    seed: int = 0


@dataclass(frozen=True, eq=False)
class PlantedNetwork:
    frame: ReadingFrame
    spec: PlantedNetworkSpec
    blobs: tuple


def planted_hotspot_network(spec=PlantedNetworkSpec()):
    """Hourly network data with hotspots planted as smooth spatial blobs.

    Persistent blobs raise concentrations around their center for one whole
    month; episodic blobs do so for ``episode_days`` consecutive days. On top
    sit a diurnal cycle, a regional day-to-day factor, a smooth AR(1)
    spatial perturbation and white noise. A small fraction of cells is left
    missing at random.
    """
    rng = np.random.default_rng(spec.seed)
    lat, lon = random_layout(spec.n_stations, spec.extent_m, rng)
    east, north = local_offsets(lat, lon, *DEFAULT_CENTER)
    n_t = spec.n_days * 24
    t0 = parse_timestamp(spec.start)
    times = t0 + 3600 * np.arange(n_t, dtype=np.int64)
    hour = (times // 3600) % 24
    day = np.arange(n_t) // 24

    regional = np.exp(np.cumsum(rng.normal(0.0, 0.08, spec.n_days)))
    regional /= regional.mean()
    diurnal = 1.0 + 0.25 * np.cos(2 * np.pi * (hour - 22) / 24)
    values = spec.background * (regional[day] * diurnal)[:, None] * np.ones(spec.n_stations)

    day_dates = [datetime.fromtimestamp(int(t), tz=timezone.utc).date() for t in times[::24]]
    months = sorted({(d.year, d.month) for d in day_dates})
    month_of_day = np.array([months.index((d.year, d.month)) for d in day_dates])
    half = spec.extent_m / 2
    blobs = []
    for kind, count in (("persistent", spec.n_persistent), ("episodic", spec.n_episodic)):
        for _ in range(count * len(months)):
            ce, cn = rng.uniform(-0.7 * half, 0.7 * half, 2)
            m = int(rng.integers(len(months)))
            days_in = np.flatnonzero(month_of_day == m)
            if kind == "persistent":
                active_days = days_in
                amp = spec.persistent_amplitude
            else:
                first = int(rng.integers(days_in[0], days_in[-1] - spec.episode_days + 2))
                active_days = np.arange(first, first + spec.episode_days)
                amp = spec.episodic_amplitude
            shape = np.exp(-((east - ce) ** 2 + (north - cn) ** 2) / (2 * spec.blob_sd_m**2))
            on = np.isin(day, active_days)
            values[on] += amp * diurnal[on, None] * shape[None, :]
            blobs.append((kind, float(ce), float(cn), int(active_days[0]), int(active_days[-1])))

    n_modes = 12
    k_dir = rng.uniform(0, 2 * np.pi, n_modes)
    k_mag = 2 * np.pi / rng.uniform(15000, 40000, n_modes)
    phase = rng.uniform(0, 2 * np.pi, n_modes)
    basis = np.cos(np.outer(east, k_mag * np.cos(k_dir)) + np.outer(north, k_mag * np.sin(k_dir))
                   + phase) * np.sqrt(2.0 / n_modes)
    coef = np.empty((n_t, n_modes))
    coef[0] = rng.standard_normal(n_modes)
    rho = 0.97
    innov = rng.standard_normal((n_t, n_modes)) * np.sqrt(1 - rho**2)
    for t in range(1, n_t):
        coef[t] = rho * coef[t - 1] + innov[t]
    values += spec.smooth_sd * coef @ basis.T
    values += spec.noise_sd * rng.standard_normal(values.shape)
    values = np.clip(values, 0.0, DEFAULT_CAP)

    present = rng.random(values.shape) >= spec.missing_fraction
    n_public = int(round(spec.public_fraction * spec.n_stations))
    stations = tuple(
        Station(f"S{k:03d}", float(lat[k]), float(lon[k]), "public" if k < n_public else "lowcost")
        for k in range(spec.n_stations)
    )
    frame = ReadingFrame(times, stations, np.where(present, values, np.nan), present)
    return PlantedNetwork(frame, spec, tuple(blobs))
