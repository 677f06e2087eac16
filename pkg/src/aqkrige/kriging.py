"""Ordinary kriging in space and in space-time windows.

The system solved for every target is the bordered semivariogram system::

    [ G   1 ] [ lam ]   [ g0 ]
    [ 1'  0 ] [ mu  ] = [ 1  ]

with ``G[i, j] = gamma(u_i - u_j)`` and ``g0[i] = gamma(u_0 - u_i)``. The
prediction is ``lam @ z`` and the kriging variance ``lam @ g0 + mu``.

Zero-lag convention: the semivariogram is 0 at a sample's own position (the
diagonal of ``G``, and ``g0[i]`` when the target coincides with sample
``i``) and ``nugget + ...`` at any positive lag. Distinct samples that share
an effective lag of zero therefore carry the nugget between them, which is
what keeps co-located readings at different times solvable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_solve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import variogram as vg
from .exceptions import DataError, InsufficientDataError, SingularSystemError
from .geo import cross_haversine, pairwise_haversine

JITTER = 1e-10
MAX_RETRIES = 3
RCOND_MIN = 1e-14


@dataclass(frozen=True, eq=False)
class KrigingTask:
    sample_lat: np.ndarray
    sample_lon: np.ndarray
    sample_time: np.ndarray
    sample_values: np.ndarray
    target: tuple
    model: vg.VariogramModel

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
                  for name in ("sample_lat", "sample_lon", "sample_time", "sample_values")]
        n = len(arrays[0])
        if n < 1 or any(len(a) != n for a in arrays):
            raise DataError("kriging task needs >= 1 sample and equal-length sample arrays")
        keys = set(zip(arrays[0].tolist(), arrays[1].tolist(), arrays[2].tolist()))
        if len(keys) != n:
            raise DataError("kriging task has duplicate (location, time) samples")
        for name, arr in zip(("sample_lat", "sample_lon", "sample_time", "sample_values"), arrays):
            object.__setattr__(self, name, arr)
        target = tuple(float(v) for v in self.target)
        if len(target) == 2:
            target = target + (0.0,)
        object.__setattr__(self, "target", target)


@dataclass(frozen=True, eq=False)
class KrigingSolution:
    weights: np.ndarray
    lagrange_mu: float
    prediction: float
    variance: float
    jitter: float = 0.0


def semivariance_matrix(model, dist, dt):
    """``G`` block with the zero-lag convention on the diagonal."""
    g = np.asarray(vg.evaluate(model, dist, dt), dtype=float)
    np.fill_diagonal(g, 0.0)
    return g


def target_semivariance(model, dist, dt):
    """``g0`` entries; exactly 0 where the target coincides with a sample."""
    g = np.asarray(vg.evaluate(model, dist, dt), dtype=float)
    return np.where(vg.effective_lag(model, dist, dt) == 0.0, 0.0, g)


def bordered(gamma):
    n = gamma.shape[0]
    A = np.ones((n + 1, n + 1))
    A[:n, :n] = gamma
    A[n, n] = 0.0
    return A


def _coincident_pairs(model, dist, dt, limit=3):
    lag = vg.effective_lag(model, dist, dt)
    iu, ju = np.triu_indices(lag.shape[0], k=1)
    hits = np.flatnonzero(lag[iu, ju] <= 1e-9 * max(model.range, 1.0))
    return [(int(iu[k]), int(ju[k])) for k in hits[:limit]]


class KrigingSystem:
    """Factorised bordered system for one sample set, reusable across targets."""

    def __init__(self, model, dist, dt, values):
        self.model = model
        self.values = np.asarray(values, dtype=float)
        n = len(self.values)
        gamma = semivariance_matrix(model, dist, dt)
        A = bordered(gamma)
        scale = max(model.total_sill, np.abs(gamma).max(initial=0.0), 1e-300)
        jitter = 0.0
        # raw LAPACK calls: lu_factor warns on exact singularity, and silencing
        # that with catch_warnings is not thread-safe
        getrf, gecon = get_lapack_funcs(("getrf", "gecon"), (A,))
        for attempt in range(MAX_RETRIES + 1):
            M = A.copy()
            if jitter:
                M[np.arange(n), np.arange(n)] += jitter
            lu, piv, _ = getrf(M)
            rcond, _ = gecon(lu, np.abs(M).sum(axis=0).max(), norm="1")
            if np.all(np.isfinite(lu)) and rcond > RCOND_MIN:
                self.lu = (lu, piv)
                self.jitter = jitter
                return
            jitter = JITTER * scale if jitter == 0.0 else jitter * 10.0
        pairs = _coincident_pairs(model, dist, dt)
        detail = f"; samples at zero effective lag: {pairs}" if pairs else ""
        raise SingularSystemError(
            f"kriging system with {n} samples is singular after {MAX_RETRIES} jitter retries"
            f" (duplicate or degenerate sample geometry{detail})"
        )

    def solve_rhs(self, g0):
        """Solve for one or many targets; ``g0`` has shape (n,) or (n, m)."""
        g0 = np.asarray(g0, dtype=float).reshape(len(self.values), -1)
        rhs = np.vstack([g0, np.ones((1, g0.shape[1]))])
        sol = lu_solve(self.lu, rhs, check_finite=False)
        lam, mu = sol[:-1], sol[-1]
        pred = self.values @ lam
        var = np.einsum("ij,ij->j", lam, rhs[:-1]) + mu
        return lam, mu, pred, np.maximum(var, 0.0)


def solve(task):
    """Ordinary kriging prediction and variance for one target."""
    m = task.model
    dist = pairwise_haversine(task.sample_lat, task.sample_lon)
    dt = np.abs(task.sample_time[:, None] - task.sample_time[None, :])
    system = KrigingSystem(m, dist, dt, task.sample_values)
    lat0, lon0, t0 = task.target
    d0 = cross_haversine(task.sample_lat, task.sample_lon, [lat0], [lon0])[:, 0]
    g0 = target_semivariance(m, d0, np.abs(task.sample_time - t0))
    lam, mu, pred, var = system.solve_rhs(g0)
    return KrigingSolution(lam[:, 0], float(mu[0]), float(pred[0]), float(var[0]), system.jitter)


class StationGeometry:
    """Cached station-station and target-station distances for a frame."""

    def __init__(self, lat, lon, target_lat=None, target_lon=None):
        self.lat = np.asarray(lat, dtype=float)
        self.lon = np.asarray(lon, dtype=float)
        self.dist = pairwise_haversine(self.lat, self.lon)
        if target_lat is not None:
            self.target_dist = cross_haversine(self.lat, self.lon, target_lat, target_lon)
        else:
            self.target_dist = None


def window_bounds(n_times, t_index, window):
    if window < 1 or window % 2 == 0:
        raise DataError(f"window must be an odd integer >= 1, got {window}")
    half = (window - 1) // 2
    return max(0, t_index - half), min(n_times, t_index + half + 1)


def window_samples(frame, t_index, window, hide=None):
    """Station indices, time offsets (s) and values of usable window cells."""
    lo, hi = window_bounds(frame.n_times, t_index, window)
    usable = frame.present[lo:hi]
    if hide is not None:
        usable = usable & ~hide[lo:hi]
    rows, cols = np.nonzero(usable)
    values = frame.values[lo:hi][rows, cols]
    offsets = (rows + lo - t_index).astype(float) * frame.step
    return cols, offsets, values


def refit_window_model(frame, t_index, window, model, geometry=None, n_bins=15, hide=None,
                       max_lag=None):
    """Refit (nugget, sill, range) on same-timestep pairs inside the window.

    Falls back to ``model`` when the window holds fewer than ``3 * n_bins``
    pairs or when the fit is degenerate.
    """
    lo, hi = window_bounds(frame.n_times, t_index, window)
    geometry = geometry or StationGeometry(frame.lat, frame.lon)
    if max_lag is None:
        max_lag = 0.5 * float(geometry.dist.max())
    if max_lag <= 0:
        return model
    acc = vg._BinAccumulator(n_bins, max_lag)
    for t in range(lo, hi):
        mask = frame.present[t] if hide is None else frame.present[t] & ~hide[t]
        if mask.sum() >= 2:
            acc.add(geometry.dist[np.ix_(mask, mask)], frame.values[t, mask])
    if acc.count.sum() < 3 * n_bins:
        return model
    emp = acc.result()
    if len(emp) < 3:
        return model
    fitted = vg.fit(emp, model.family, alpha=model.alpha)
    return model if fitted.degenerate else fitted


def _krige_timestep(frame, t_index, geometry, model, window, refit, hide, n_bins):
    cols, offsets, values = window_samples(frame, t_index, window, hide)
    m = geometry.target_dist.shape[1]
    if len(values) == 0:
        return np.full(m, np.nan), np.full(m, np.nan)
    if refit:
        model = refit_window_model(frame, t_index, window, model, geometry, n_bins, hide)
    dist = geometry.dist[np.ix_(cols, cols)]
    dt = np.abs(offsets[:, None] - offsets[None, :])
    system = KrigingSystem(model, dist, dt, values)
    d0 = geometry.target_dist[cols]
    g0 = target_semivariance(model, d0, np.abs(offsets)[:, None])
    _, _, pred, var = system.solve_rhs(g0)
    return pred, var


def interpolate_timestep(frame, t_index, targets, model, window=1, refit=False, n_bins=15,
                         hide=None):
    """Krige every target location at timestep ``t_index``.

    Samples are all present cells within ``(window - 1) / 2`` steps of
    ``t_index``; ``window=1`` is pure spatial kriging. ``hide`` is an
    optional boolean (times x stations) mask of cells withheld from the
    sample set.

    Returns
    -------
    predictions, variances : ndarray of shape (n_targets,)
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    geometry = StationGeometry(frame.lat, frame.lon, targets[:, 0], targets[:, 1])
    window_bounds(frame.n_times, t_index, window)
    pred, var = _krige_timestep(frame, t_index, geometry, model, window, refit, hide, n_bins)
    if np.isnan(pred).all() and len(pred):
        raise InsufficientDataError(f"no samples inside the window around timestep {t_index}")
    return pred, var


def interpolate_series(frame, target_lat, target_lon, model, window=1, refit=False, n_bins=15,
                       hide=None, t_indices=None, n_jobs=1):
    """Krige targets at many timesteps; NaN where a window holds no samples.

    Timesteps are independent, so they are dispatched to ``n_jobs`` worker
    threads. Output order and values do not depend on ``n_jobs``.
    """
    geometry = StationGeometry(frame.lat, frame.lon, np.atleast_1d(target_lat),
                               np.atleast_1d(target_lon))
    if t_indices is None:
        t_indices = range(frame.n_times)
    t_indices = list(t_indices)
    m = geometry.target_dist.shape[1]
    preds = np.full((len(t_indices), m), np.nan)
    variances = np.full((len(t_indices), m), np.nan)

    def one(t):
        return _krige_timestep(frame, t, geometry, model, window, refit, hide, n_bins)

    if n_jobs is None or n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(one, t_indices))
    else:
        results = [one(t) for t in t_indices]
    for k, (p, v) in enumerate(results):
        preds[k], variances[k] = p, v
    return preds, variances


class OrdinaryKriging(RegressorMixin, BaseEstimator):
    """Scikit-learn style ordinary (space-time) kriging regressor.

    ``X`` columns are ``lat, lon`` or ``lat, lon, time`` (seconds). When
    ``model`` is None a variogram of ``family`` is fit to same-time sample
    pairs and combined with ``alpha`` for the space-time lag.

    Parameters
    ----------
    family : {"spherical", "exponential", "gaussian"}
    model : VariogramModel, optional
        Use this model as is instead of fitting one.
    alpha : float
        Space-time anisotropy in m/s, used only when fitting.
    n_bins : int
        Number of lag bins for the empirical variogram.
    """

    def __init__(self, family="spherical", model=None, alpha=0.0, n_bins=15):
        self.family = family
        self.model = model
        self.alpha = alpha
        self.n_bins = n_bins

    @staticmethod
    def _split(X):
        lat, lon = X[:, 0], X[:, 1]
        t = X[:, 2] if X.shape[1] > 2 else np.zeros(len(X))
        return lat, lon, t

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[1] not in (2, 3):
            raise ValueError("X must have columns (lat, lon) or (lat, lon, time)")
        lat, lon, t = self._split(X)
        if self.model is not None:
            model = self.model
        else:
            model = self._fit_variogram(lat, lon, t, y)
        dist = pairwise_haversine(lat, lon)
        dt = np.abs(t[:, None] - t[None, :])
        self.model_ = model
        self.system_ = KrigingSystem(model, dist, dt, y)
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def _fit_variogram(self, lat, lon, t, y):
        dist = pairwise_haversine(lat, lon)
        max_lag = 0.5 * float(dist.max())
        if max_lag <= 0:
            raise InsufficientDataError("all samples share one location; cannot fit a variogram")
        acc = vg._BinAccumulator(self.n_bins, max_lag)
        for tv in np.unique(t):
            idx = np.flatnonzero(t == tv)
            if len(idx) >= 2:
                acc.add(dist[np.ix_(idx, idx)], y[idx])
        emp = acc.result()
        fitted = vg.fit(emp, self.family, alpha=self.alpha)
        if fitted.degenerate:
            # constant data: any valid model reproduces it exactly
            return vg.VariogramModel(self.family, 1.0, max_lag, 0.0, self.alpha)
        return fitted

    def predict(self, X, return_std=False):
        check_is_fitted(self, "system_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        lat, lon, t = self._split(X)
        flat, flon, ft = self._split(self.X_fit_)
        d0 = cross_haversine(flat, flon, lat, lon)
        g0 = target_semivariance(self.model_, d0, np.abs(ft[:, None] - t[None, :]))
        _, _, pred, var = self.system_.solve_rhs(g0)
        if return_std:
            return pred, np.sqrt(var)
        return pred
