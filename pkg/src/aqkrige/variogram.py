"""Semivariogram models, empirical estimation and weighted least-squares fitting.

All three families are parameterised by a sill ``C``, a practical range
``a`` (distance where 95% of the sill is reached for the exponential and
gaussian families, the exact range for the spherical one) and a nugget.
Space-time lags are folded into one effective distance with the metric
model ``h' = sqrt(h**2 + (alpha * dt)**2)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares

from .exceptions import DataError, InsufficientDataError
from .geo import pairwise_haversine

FAMILIES = ("spherical", "exponential", "gaussian")


@dataclass(frozen=True)
class VariogramModel:
    family: str
    sill: float
    range: float
    nugget: float = 0.0
    alpha: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown variogram family {self.family!r}; expected one of {FAMILIES}")
        if not self.degenerate and (self.sill <= 0 or self.range <= 0):
            raise ValueError("sill and range must be positive")
        if self.nugget < 0 or self.alpha < 0:
            raise ValueError("nugget and alpha must be non-negative")

    @property
    def total_sill(self):
        return self.sill + self.nugget

    def with_alpha(self, alpha):
        return VariogramModel(self.family, self.sill, self.range, self.nugget, float(alpha),
                              self.degenerate)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            sill=float(d["sill"]),
            range=float(d["range"]),
            nugget=float(d.get("nugget", 0.0)),
            alpha=float(d.get("alpha", 0.0)),
            degenerate=bool(d.get("degenerate", False)),
        )


def save_model(path, model):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return VariogramModel.from_dict(json.load(fh))


def _structure(family, r):
    """Unit-sill structured part as a function of ``r = h / a``."""
    if family == "spherical":
        return np.where(r < 1.0, 1.5 * r - 0.5 * r**3, 1.0)
    if family == "exponential":
        return 1.0 - np.exp(-3.0 * r)
    return 1.0 - np.exp(-3.0 * r**2)


def effective_lag(model, h, dt=0.0):
    return np.hypot(np.asarray(h, dtype=float), model.alpha * np.asarray(dt, dtype=float))


def evaluate(model, h, dt=0.0):
    """Semivariance at spatial lag ``h`` (m) and time lag ``dt`` (s).

    ``evaluate(model, 0, 0)`` equals the nugget.
    """
    hp = effective_lag(model, h, dt)
    if model.degenerate:
        return np.full(np.shape(hp), model.nugget) if np.ndim(hp) else float(model.nugget)
    out = model.nugget + model.sill * _structure(model.family, hp / model.range)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True, eq=False)
class EmpiricalVariogram:
    lags: np.ndarray
    gamma: np.ndarray
    counts: np.ndarray
    max_lag: float

    @property
    def bins(self):
        return list(zip(self.lags.tolist(), self.gamma.tolist(), self.counts.tolist()))

    def __len__(self):
        return len(self.lags)


class _BinAccumulator:
    def __init__(self, n_bins, max_lag):
        if n_bins < 2:
            raise DataError("n_bins must be >= 2")
        if not max_lag > 0:
            raise DataError("max_lag must be positive")
        self.n_bins = n_bins
        self.max_lag = float(max_lag)
        self.lag_sum = np.zeros(n_bins)
        self.gamma_sum = np.zeros(n_bins)
        self.count = np.zeros(n_bins, dtype=np.int64)

    def add(self, dist, values):
        iu, ju = np.triu_indices(len(values), k=1)
        d = dist[iu, ju]
        half_sq = 0.5 * (values[iu] - values[ju]) ** 2
        keep = d <= self.max_lag
        d, half_sq = d[keep], half_sq[keep]
        width = self.max_lag / self.n_bins
        idx = np.minimum((d / width).astype(int), self.n_bins - 1)
        np.add.at(self.lag_sum, idx, d)
        np.add.at(self.gamma_sum, idx, half_sq)
        np.add.at(self.count, idx, 1)

    def result(self):
        keep = self.count > 0
        c = self.count[keep]
        return EmpiricalVariogram(
            lags=self.lag_sum[keep] / c,
            gamma=self.gamma_sum[keep] / c,
            counts=c,
            max_lag=self.max_lag,
        )


def default_max_lag(lat, lon):
    d = pairwise_haversine(lat, lon)
    return 0.5 * float(d.max())


def empirical_variogram_points(lat, lon, values, n_bins=15, max_lag=None):
    """Binned semivariance over all unordered pairs of the given points.

    Each retained bin reports the mean pair distance, the mean of
    ``0.5 * (z_i - z_j)**2`` and the pair count. Empty bins are dropped.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(values) < 3:
        raise InsufficientDataError(f"need >= 3 located values for a variogram, got {len(values)}")
    dist = pairwise_haversine(lat, lon)
    if max_lag is None:
        max_lag = 0.5 * float(dist.max())
    acc = _BinAccumulator(n_bins, max_lag)
    acc.add(dist, values)
    return acc.result()


def empirical_variogram(frame, t_index, n_bins=15, max_lag=None):
    """Empirical semivariogram of the stations reporting at ``t_index``.

    ``max_lag`` defaults to half the largest pairwise distance in the full
    station layout.
    """
    mask = frame.present[t_index]
    if mask.sum() < 3:
        raise InsufficientDataError(
            f"timestep {t_index}: need >= 3 reporting stations, got {int(mask.sum())}"
        )
    if max_lag is None:
        max_lag = default_max_lag(frame.lat, frame.lon)
    return empirical_variogram_points(frame.lat[mask], frame.lon[mask], frame.values[t_index, mask],
                                      n_bins=n_bins, max_lag=max_lag)


def pooled_variogram(frame, t_indices=None, n_bins=15, max_lag=None):
    """Spatial variogram pooling same-timestep pairs over several timesteps."""
    if t_indices is None:
        t_indices = range(frame.n_times)
    if max_lag is None:
        max_lag = default_max_lag(frame.lat, frame.lon)
    dist = pairwise_haversine(frame.lat, frame.lon)
    acc = _BinAccumulator(n_bins, max_lag)
    used = 0
    for t in t_indices:
        mask = frame.present[t]
        if mask.sum() < 2:
            continue
        acc.add(dist[np.ix_(mask, mask)], frame.values[t, mask])
        used += 1
    if not acc.count.any():
        raise InsufficientDataError("no station pairs available for a pooled variogram")
    return acc.result()


def objective(empirical, family, nugget, sill, range_):
    if sill <= 0 or range_ <= 0:
        return np.inf
    model_gamma = nugget + sill * _structure(family, empirical.lags / range_)
    return float(np.sum(empirical.counts * (empirical.gamma - model_gamma) ** 2))


def range_starts(empirical, n_starts=8):
    lo = max(float(empirical.lags.min()), 1e-6 * float(empirical.lags.max()))
    hi = 2.0 * float(empirical.lags.max())
    return np.geomspace(lo, hi, n_starts)


def start_points(empirical, n_starts=8):
    """Initial ``(nugget, sill, range)`` triples of the multi-start search."""
    gamma = empirical.gamma
    nug0 = float(np.clip(0.5 * gamma.min(), 0.0, 9.0 * gamma.max()))
    sill0 = float(max(gamma.max() - nug0, 1e-3 * gamma.max()))
    return [(nug0, sill0, float(a0)) for a0 in range_starts(empirical, n_starts)]


def fit(empirical, family="spherical", alpha=0.0, n_starts=8):
    """Weighted least-squares fit of (nugget, sill, range).

    Weights are the bin pair counts. A bounded trust-region search is run
    from ``n_starts`` log-spaced range starts spanning
    ``[min lag, 2 * max lag]`` and the lowest-objective result is kept.
    All-zero semivariance gives a model flagged ``degenerate``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown variogram family {family!r}")
    if len(empirical) < 3:
        raise InsufficientDataError(f"need >= 3 variogram bins to fit, got {len(empirical)}")
    lags, gamma, w = empirical.lags, empirical.gamma, np.sqrt(empirical.counts.astype(float))
    g_scale = float(gamma.max())
    if g_scale <= 0:
        return VariogramModel(family, 0.0, float(empirical.max_lag), 0.0, alpha, degenerate=True)
    l_scale = float(lags.max())

    def residuals(p):
        nug, sill, rng = p
        return w * (gamma / g_scale - nug - sill * _structure(family, lags / (rng * l_scale)))

    lower = np.array([0.0, 1e-12, 1e-6])
    upper = np.array([10.0, 10.0, 20.0])

    candidates = []
    for nug0, sill0, a0 in start_points(empirical, n_starts):
        start = np.clip([nug0 / g_scale, sill0 / g_scale, a0 / l_scale], lower, upper)
        candidates.append(start)
        sol = least_squares(residuals, start, bounds=(lower, upper), method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        candidates.append(sol.x)
    costs = [objective(empirical, family, c[0] * g_scale, c[1] * g_scale, c[2] * l_scale)
             for c in candidates]
    best = candidates[int(np.argmin(costs))]
    return VariogramModel(
        family=family,
        sill=float(best[1] * g_scale),
        range=float(best[2] * l_scale),
        nugget=float(best[0] * g_scale),
        alpha=float(alpha),
    )
