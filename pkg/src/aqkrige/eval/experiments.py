"""Evaluation protocols: interpolation splits, hotspot retrieval and alpha search.

Every protocol takes a master ``seed``; repetition ``r`` draws from
``numpy.random.default_rng([seed, r])`` so results do not depend on how
work is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import lu_solve

from .. import hotspot as hs
from .. import kriging as kr
from .. import variogram as vg
from ..datamodel import RAW_UNIT, preprocess
from ..exceptions import DataError, InsufficientDataError, SingularSystemError
from .metrics import aggregate, compute_metrics, score_retrieval
from .mlp import MLPInterpolator

MODEL_KINDS = ("kriging", "st_kriging", "mlp", "oracle")
ALPHA_GRID = (1e-2, 1e-1, 1.0, 10.0, 100.0)
TEST_FRACTION = 0.2


def _map(fn, items, n_jobs):
    items = list(items)
    if n_jobs is not None and n_jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def fit_frame_model(frame, family="spherical", n_bins=15, t_indices=None, alpha=0.0):
    """Variogram fitted to same-timestep pairs pooled over the frame."""
    emp = vg.pooled_variogram(frame, t_indices, n_bins=n_bins)
    model = vg.fit(emp, family, alpha=alpha)
    if model.degenerate:
        raise InsufficientDataError("pooled variogram is flat; cannot fit a kriging model")
    return model


def qualifying_timesteps(frame, min_active=None):
    """Timesteps with more than ``min_active`` present stations.

    The default is half the station count.
    """
    if min_active is None:
        min_active = frame.n_stations // 2
    return np.flatnonzero(frame.present.sum(axis=1) > min_active)


def _subsample(indices, limit):
    if limit is None or len(indices) <= limit:
        return np.asarray(indices)
    pick = np.linspace(0, len(indices) - 1, limit).round().astype(int)
    return np.asarray(indices)[pick]


def _split_masks(frame, t_indices, rng):
    """Boolean (times x stations) mask of test cells, 20% per timestep."""
    test = np.zeros(frame.values.shape, dtype=bool)
    for t in t_indices:
        avail = np.flatnonzero(frame.present[t])
        n_test = max(1, int(round(TEST_FRACTION * len(avail))))
        test[t, rng.choice(avail, n_test, replace=False)] = True
    return test


def _kriging_predictions(frame, t_indices, test, model, window, n_jobs):
    geometry = kr.StationGeometry(frame.lat, frame.lon, frame.lat, frame.lon)
    pred = np.full(frame.values.shape, np.nan)
    # hide only the test row itself: a test station's readings at other
    # timesteps in the window stay visible, as in a live network
    def one(t):
        hide = np.zeros_like(test)
        hide[t] = test[t]
        p, _ = kr._krige_timestep(frame, t, geometry, model, window, False, hide, 15)
        return p

    for t, p in zip(t_indices, _map(one, t_indices, n_jobs)):
        pred[t, test[t]] = p[test[t]]
    return pred


def _mlp_predictions(frame, test, mlp_params, seed):
    train = frame.present & ~test
    tt, ss = np.nonzero(train)
    X = np.column_stack([frame.lat[ss], frame.lon[ss], frame.times[tt].astype(float)])
    model = MLPInterpolator(seed=seed, **(mlp_params or {})).fit(X, frame.values[tt, ss])
    qt, qs = np.nonzero(test)
    Xq = np.column_stack([frame.lat[qs], frame.lon[qs], frame.times[qt].astype(float)])
    pred = np.full(frame.values.shape, np.nan)
    pred[qt, qs] = model.predict(Xq)
    return pred


def interpolation_split_eval(frame, model_kind, window=7, seed=0, n_repeats=5, model=None,
                             min_active=None, max_timesteps=None, truth=None, family="spherical",
                             mlp_params=None, n_jobs=1):
    """Repeated per-timestep 80/20 station splits.

    Parameters
    ----------
    frame : ReadingFrame
    model_kind : {"kriging", "st_kriging", "mlp", "oracle"}
        ``kriging`` uses a one-step window, ``st_kriging`` uses ``window``.
        ``oracle`` copies ``truth`` (or the held-out values) and exists to
        check the bookkeeping.
    model : VariogramModel, optional
        Defaults to a pooled fit on the frame. For ``st_kriging`` its
        ``alpha`` must be positive.
    min_active : int, optional
        A timestep qualifies when more than this many stations report.
    max_timesteps : int, optional
        Evaluate an evenly spaced subset of the qualifying timesteps.

    Returns
    -------
    Metrics
        Mean MAPE and RMSE over repeats, with standard errors.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; choose from {MODEL_KINDS}")
    if frame.n_times == 0 or frame.n_stations == 0:
        raise DataError("frame is empty")
    t_eval = _subsample(qualifying_timesteps(frame, min_active), max_timesteps)
    if len(t_eval) == 0:
        raise InsufficientDataError("no timestep has enough active stations for a split")
    if model_kind in ("kriging", "st_kriging") and model is None:
        model = fit_frame_model(frame, family, t_indices=t_eval)
    if model_kind == "st_kriging" and window > 1 and model.alpha <= 0:
        raise DataError("space-time kriging needs a model with alpha > 0; see select_alpha")
    reference = frame.values if truth is None else np.asarray(truth, dtype=float)

    per_repeat = []
    for r in range(n_repeats):
        rng = np.random.default_rng([seed, r])
        test = _split_masks(frame, t_eval, rng)
        if model_kind == "kriging":
            pred = _kriging_predictions(frame, t_eval, test, model, 1, n_jobs)
        elif model_kind == "st_kriging":
            pred = _kriging_predictions(frame, t_eval, test, model, window, n_jobs)
        elif model_kind == "mlp":
            pred = _mlp_predictions(frame, test, mlp_params, int(rng.integers(2**31)))
        else:
            pred = np.where(test, reference, np.nan)
        per_repeat.append(compute_metrics(reference[test], pred[test]))
    return aggregate(per_repeat)


# -- hotspot retrieval ------------------------------------------------------

def _krige_columns(frame, target_lat, target_lon, model, window, hide=None, detrend=False,
                   tz_offset_minutes=0, n_jobs=1):
    """Kriged raw-unit series at target coordinates (times x targets)."""
    work, state = frame, None
    if detrend:
        work, state = preprocess(frame, tz_offset_minutes=tz_offset_minutes)
    pred, _ = kr.interpolate_series(work, target_lat, target_lon, model, window=window,
                                    hide=hide, n_jobs=n_jobs)
    if state is not None:
        pred = np.exp(pred + state.trend(frame.times)[:, None]) - state.shift
    return np.clip(pred, 0.0, frame.cap)


def location_months(frame, values, present, indices, rules, tz_offset_minutes=0):
    """Hotspot and evaluable (location, month) keys for the given stations.

    A location-month is evaluable when it has at least one active day.
    """
    hot, evaluable = set(), set()
    for col, k in enumerate(indices):
        st = frame.stations[k]
        res = hs.classify_series(frame.times, values[:, col], st.id, rules, present[:, col],
                                 tz_offset_minutes, frame.step, network=st.network)
        for m in res.months:
            if not m.insufficient:
                evaluable.add((st.id, m.period))
            if m.is_hotspot:
                hot.add((st.id, m.period))
    return hot, evaluable


def _require_raw(frame):
    if frame.unit != RAW_UNIT:
        raise DataError(f"retrieval experiments need raw concentrations, got {frame.unit!r}")


def held_out_stations(n_stations, pct, seed):
    """Sorted random station indices, ``ceil(pct * n)`` of them."""
    if not 0.0 <= pct <= 0.95:
        raise DataError(f"pct must lie in [0, 0.95], got {pct}")
    k = math.ceil(pct * n_stations - 1e-12)
    if k >= n_stations:
        raise DataError("removing every station leaves nothing to interpolate from")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_stations, k, replace=False))


def _sensor_predictions(frame, removed, model, window, interpolator, detrend, tz, n_jobs):
    kept = np.setdiff1d(np.arange(frame.n_stations), removed)
    train = frame.select_stations(kept)
    lat, lon = frame.lat[removed], frame.lon[removed]
    if interpolator is not None:
        return np.asarray(interpolator(train, lat, lon), dtype=float)
    return _krige_columns(train, lat, lon, model, window, None, detrend, tz, n_jobs)


def _score_sensors(frame, removed, pred, rules, tz, condition):
    true_hot, evaluable = location_months(frame, frame.values[:, removed],
                                          frame.present[:, removed], removed, rules, tz)
    pred_hot, _ = location_months(frame, pred, np.isfinite(pred), removed, rules, tz)
    return score_retrieval(true_hot, pred_hot & evaluable, condition)


def missing_sensor_experiment(frame, pct, model, window=7, seed=0, rules=hs.DEFAULT_RULES,
                              interpolator=None, detrend=False, tz_offset_minutes=0, n_jobs=1):
    """Hotspot retrieval at stations removed from the network entirely.

    ``ceil(pct * n)`` stations are dropped, their full series interpolated
    from the rest and classified; location-months are scored against the
    labels of their real readings. Months with no active day in the real
    series are not evaluable and are left out. The no-imputation baseline
    predicts nothing at removed stations, so its recall is 0 whenever any
    true hotspot exists.

    ``interpolator(train_frame, lat, lon) -> (times x targets)`` replaces
    kriging when given.
    """
    _require_raw(frame)
    removed = held_out_stations(frame.n_stations, pct, seed)
    condition = {"missing_sensors_pct": pct, "seed": seed, "window": window}
    if len(removed) == 0:
        return score_retrieval(set(), set(), condition)
    pred = _sensor_predictions(frame, removed, model, window, interpolator, detrend,
                               tz_offset_minutes, n_jobs)
    return _score_sensors(frame, removed, pred, rules, tz_offset_minutes, condition)


def threshold_sweep(frame, scale_factors, pct=0.5, model=None, window=7, seed=0,
                    rules=hs.DEFAULT_RULES, interpolator=None, detrend=False,
                    tz_offset_minutes=0, n_jobs=1):
    """Missing-sensor retrieval with the monthly thresholds scaled per factor.

    The interpolation is shared across factors; only the labelling changes,
    so factor 1.0 reproduces :func:`missing_sensor_experiment` exactly.
    """
    _require_raw(frame)
    factors = [float(f) for f in scale_factors]
    if any(f <= 0 for f in factors):
        raise DataError("scale factors must be positive")
    removed = held_out_stations(frame.n_stations, pct, seed)
    if len(removed) == 0:
        return [score_retrieval(set(), set(), {"missing_sensors_pct": pct, "seed": seed,
                                               "window": window, "scale_factor": f})
                for f in factors]
    pred = _sensor_predictions(frame, removed, model, window, interpolator, detrend,
                               tz_offset_minutes, n_jobs)
    out = []
    for f in factors:
        condition = {"missing_sensors_pct": pct, "seed": seed, "window": window,
                     "scale_factor": f}
        out.append(_score_sensors(frame, removed, pred, rules.scaled(f), tz_offset_minutes,
                                  condition))
    return out


def drop_readings(frame, pct, seed):
    """Mask of ``round(pct * n_present)`` present cells chosen uniformly."""
    if not 0.0 <= pct <= 0.9:
        raise DataError(f"pct must lie in [0, 0.9], got {pct}")
    rows, cols = np.nonzero(frame.present)
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(rows), int(round(pct * len(rows))), replace=False)
    drop = np.zeros(frame.values.shape, dtype=bool)
    drop[rows[pick], cols[pick]] = True
    return drop


def missing_reading_experiment(frame, pct, model, window=7, seed=0, rules=hs.DEFAULT_RULES,
                               detrend=False, tz_offset_minutes=0, n_jobs=1):
    """Hotspot retrieval under random reading dropout.

    Returns
    -------
    (RetrievalReport, RetrievalReport)
        The imputed pipeline, which fills dropped cells by kriging from the
        surviving readings, and the baseline that leaves them missing. Both
        are scored against labels from the full data. Cells whose window has
        no samples stay missing.
    """
    _require_raw(frame)
    drop = drop_readings(frame, pct, seed)
    condition = {"missing_readings_pct": pct, "seed": seed, "window": window}
    everyone = np.arange(frame.n_stations)
    true_hot, _ = location_months(frame, frame.values, frame.present, everyone, rules,
                                  tz_offset_minutes)

    kept = frame.present & ~drop
    base_values = np.where(kept, frame.values, np.nan)
    base_hot, _ = location_months(frame, base_values, kept, everyone, rules, tz_offset_minutes)

    if drop.any():
        rows = np.flatnonzero(drop.any(axis=1))
        thinned = frame.with_values(base_values, kept)
        work, state = thinned, None
        if detrend:
            work, state = preprocess(thinned, tz_offset_minutes=tz_offset_minutes)
        pred, _ = kr.interpolate_series(work, frame.lat, frame.lon, model, window=window,
                                        t_indices=rows, n_jobs=n_jobs)
        if state is not None:
            pred = np.exp(pred + state.trend(frame.times[rows])[:, None]) - state.shift
        filled = base_values.copy()
        sub = filled[rows]
        sub[drop[rows]] = np.clip(pred, 0.0, frame.cap)[drop[rows]]
        filled[rows] = sub
    else:
        filled = base_values
    imp_hot, _ = location_months(frame, filled, np.isfinite(filled), everyone, rules,
                                 tz_offset_minutes)
    return (score_retrieval(true_hot, imp_hot, condition),
            score_retrieval(true_hot, base_hot, dict(condition, baseline=True)))


# -- cross-dataset normalisation ---------------------------------------------

def spatial_sigma(frame):
    """Per-timestep standard deviation across present stations (>= 2 needed)."""
    out = []
    for t in range(frame.n_times):
        v = frame.values[t, frame.present[t]]
        if len(v) >= 2:
            out.append(float(np.std(v)))
    return np.array(out)


def nrmse_cross_city(rmse, sigma_src, sigma_ref):
    """RMSE rescaled by the ratio of time-mean spatial deviations, ref over src."""
    sigma_src = np.asarray(sigma_src, dtype=float)
    sigma_ref = np.asarray(sigma_ref, dtype=float)
    if sigma_src.size == 0 or sigma_ref.size == 0:
        raise DataError("spatial deviation sequences must be nonempty")
    src, ref = float(np.mean(sigma_src)), float(np.mean(sigma_ref))
    if src <= 0 or ref <= 0:
        raise DataError("mean spatial deviation must be positive")
    return float(rmse) * ref / src


# -- space-time anisotropy ----------------------------------------------------

def leave_station_out_residuals(system, cols, t_mask):
    """Residuals ``z - z_hat`` at ``t_mask`` cells, each station held out whole.

    Uses the block identity for the bordered system: removing sample set S
    leaves residuals ``inv(B[S, S]) @ (B @ [z; 0])[S]`` with ``B`` the inverse
    of the bordered matrix.
    """
    n = len(system.values)
    lu = system.lu
    inv = lu_solve(lu, np.eye(n + 1), check_finite=False)
    dual = inv @ np.append(system.values, 0.0)
    out = np.full(n, np.nan)
    for station in np.unique(cols[t_mask]):
        block = np.flatnonzero(cols == station)
        if len(block) == n:
            continue
        res = np.linalg.solve(inv[np.ix_(block, block)], dual[block])
        keep = t_mask[block]
        out[block[keep]] = res[keep]
    return out


def alpha_score(frame, model, alpha, window, t_indices):
    """Leave-one-station-out RMSE of space-time kriging with this ``alpha``."""
    m = model.with_alpha(alpha)
    geometry = kr.StationGeometry(frame.lat, frame.lon)
    sq = []
    for t in t_indices:
        cols, offsets, values = kr.window_samples(frame, t, window)
        if len(np.unique(cols)) < 3:
            continue
        dist = geometry.dist[np.ix_(cols, cols)]
        dt = np.abs(offsets[:, None] - offsets[None, :])
        try:
            system = kr.KrigingSystem(m, dist, dt, values)
        except SingularSystemError:
            return np.inf
        res = leave_station_out_residuals(system, cols, offsets == 0)
        sq.extend(res[np.isfinite(res)] ** 2)
    if not sq:
        raise InsufficientDataError("no timestep supports leave-one-station-out scoring")
    return float(np.sqrt(np.mean(sq)))


def select_alpha(frame, model, alphas=ALPHA_GRID, window=7, n_timesteps=24, seed=0):
    """Grid-search alpha (m/s) by leave-one-station-out RMSE.

    Returns
    -------
    (float, dict)
        Best alpha (first on ties) and the score for every grid value.
    """
    candidates = qualifying_timesteps(frame, 2)
    if len(candidates) == 0:
        raise InsufficientDataError("no timestep has three or more stations")
    rng = np.random.default_rng(seed)
    k = min(n_timesteps, len(candidates))
    t_indices = np.sort(rng.choice(candidates, k, replace=False))
    scores = {float(a): alpha_score(frame, model, float(a), window, t_indices) for a in alphas}
    best = min(scores, key=lambda a: (scores[a], list(scores).index(a)))
    return best, scores
