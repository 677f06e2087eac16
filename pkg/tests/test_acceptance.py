"""Acceptance criteria 1-13, one test per criterion.

Each test records a PASS/FAIL line, printed at the end of the run (and
immediately when pytest runs with ``-s``).
"""

import math
import shutil
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import gaussian_kde

import conftest
from aqkrige import dispersion as dp
from aqkrige import fieldmap as fm
from aqkrige import hotspot as hs
from aqkrige import kriging as kr
from aqkrige import variogram as vg
from aqkrige.eval import experiments as ex
from aqkrige.eval import mlp
from aqkrige.eval import synth as sy
from aqkrige.stationarity import adf_test
from cli_pipeline import run_all, snapshot
from fixtures_hotspot import ANNUAL_CASES, MONTH_CASES
from oracles import bordered_kriging

CENTER = (28.6, 77.2)


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def random_task(rng, n_max=10):
    n = int(rng.integers(1, n_max + 1))
    lat = CENTER[0] + rng.uniform(-0.1, 0.1, n)
    lon = CENTER[1] + rng.uniform(-0.1, 0.1, n)
    t = rng.integers(0, 5, n) * 3600.0
    model = vg.VariogramModel(str(rng.choice(vg.FAMILIES)), rng.uniform(0.5, 3.0),
                              rng.uniform(3000, 20000), rng.uniform(0.0, 0.3),
                              rng.uniform(0.0, 3.0))
    target = (CENTER[0] + rng.uniform(-0.1, 0.1), CENTER[1] + rng.uniform(-0.1, 0.1),
              float(rng.integers(0, 5)) * 3600.0)
    return kr.KrigingTask(lat, lon, t, rng.normal(80, 20, n), target, model)


def test_criterion_01_oracle_equivalence():
    rng = np.random.default_rng(20191101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        task = random_task(rng)
        sol = kr.solve(task)
        m = task.model
        pts = list(zip(task.sample_lat, task.sample_lon, task.sample_time))
        lam, mu, pred, var = bordered_kriging(pts, task.sample_values, task.target, m.family,
                                              m.sill, m.range, m.nugget, m.alpha)
        worst = max(worst, np.abs(sol.weights - lam).max(), abs(sol.lagrange_mu - mu),
                    abs(sol.prediction - pred), abs(sol.variance - var))
    elapsed = time.perf_counter() - start
    report(1, worst < 1e-8 and elapsed < 10,
           f"1000 tasks, max deviation {worst:.2e} (< 1e-8), {elapsed:.1f} s (< 10 s)")


def test_criterion_02_exactness_and_unbiasedness(monkeypatch):
    sums = []
    original = kr.KrigingSystem.solve_rhs

    def recording(self, g0):
        out = original(self, g0)
        sums.extend(np.abs(out[0].sum(axis=0) - 1.0))
        return out

    monkeypatch.setattr(kr.KrigingSystem, "solve_rhs", recording)
    rng = np.random.default_rng(2)
    exact_err = 0.0
    n_exact = 0
    for _ in range(200):
        n = int(rng.integers(1, 11))
        lat = CENTER[0] + rng.uniform(-0.1, 0.1, n)
        lon = CENTER[1] + rng.uniform(-0.1, 0.1, n)
        z = rng.normal(80, 20, n)
        model = vg.VariogramModel(str(rng.choice(vg.FAMILIES)), rng.uniform(0.5, 3.0),
                                  rng.uniform(3000, 20000))
        k = int(rng.integers(n))
        sol = kr.solve(kr.KrigingTask(lat, lon, np.zeros(n), z, (lat[k], lon[k]), model))
        exact_err = max(exact_err, abs(sol.prediction - z[k]), sol.variance)
        n_exact += 1
    for _ in range(300):
        kr.solve(random_task(rng))
    f = sy.synth_field(sy.SyntheticFieldSpec(vg.VariogramModel("spherical", 1.0, 9000.0, 0.05,
                                                               0.8), 12, n_stations=25, seed=3))
    for window in (1, 3, 7):
        kr.interpolate_series(f.frame, f.frame.lat + 0.003, f.frame.lon, f.spec.variogram,
                              window=window)
    worst_sum = max(sums)
    report(2, exact_err < 1e-8 and worst_sum < 1e-8,
           f"{n_exact} exactness checks, max |z_hat - z| or variance {exact_err:.1e}; "
           f"{len(sums)} solves, max |sum(lambda) - 1| {worst_sum:.1e} (< 1e-8)")


def test_criterion_03_variance_calibration():
    sq, var = [], []
    model = vg.VariogramModel("exponential", 1.0, 8000.0, 0.05, 0.5)
    for seed in range(2):
        f = sy.synth_field(sy.SyntheticFieldSpec(model, 150, n_stations=40, extent_m=30000.0,
                                                 seed=seed))
        frame = f.frame
        for k in range(frame.n_stations):
            keep = [j for j in range(frame.n_stations) if j != k]
            pred, v = kr.interpolate_series(frame.select_stations(keep), [frame.lat[k]],
                                            [frame.lon[k]], model, window=3)
            sq.extend((pred[:, 0] - f.truth[:, k]) ** 2)
            var.extend(v[:, 0])
    ratio = float(np.mean(sq) / np.mean(var))
    report(3, len(sq) >= 5000 and 0.8 <= ratio <= 1.25,
           f"{len(sq)} predictions, MSE / mean variance = {ratio:.3f} (in [0.8, 1.25])")


def test_criterion_04_space_time_ordering():
    start = time.perf_counter()
    rmse = {"st_kriging": [], "kriging": [], "mlp": []}
    truth_model = vg.VariogramModel("exponential", 1.0, 8000.0, 0.02, 0.5)
    for seed in range(20):
        f = sy.synth_field(sy.SyntheticFieldSpec(truth_model, 100, n_stations=40,
                                                 extent_m=30000.0, mean=4.0, seed=seed))
        frame = f.frame
        fitted = ex.fit_frame_model(frame, "exponential")
        alpha, _ = ex.select_alpha(frame, fitted, window=7, n_timesteps=12, seed=seed)
        model = fitted.with_alpha(alpha)
        for kind in rmse:
            m = ex.interpolation_split_eval(frame, kind, window=7, seed=seed, n_repeats=1,
                                            model=model, max_timesteps=40)
            rmse[kind].append(m.rmse)
    mean = {k: float(np.mean(v)) for k, v in rmse.items()}
    elapsed = time.perf_counter() - start
    ok = mean["st_kriging"] < mean["kriging"] and mean["st_kriging"] < mean["mlp"] \
        and elapsed < 300
    report(4, ok, f"RMSE over 20 seeds: st_kriging {mean['st_kriging']:.3f}, kriging "
                  f"{mean['kriging']:.3f}, mlp {mean['mlp']:.3f}; {elapsed:.0f} s (< 300 s)")


@lru_cache(maxsize=None)
def planted(seed):
    frame = sy.planted_hotspot_network(sy.PlantedNetworkSpec(seed=seed)).frame
    fitted = ex.fit_frame_model(frame, "spherical")
    alpha, _ = ex.select_alpha(frame, fitted, window=7, n_timesteps=12, seed=seed)
    return frame, fitted.with_alpha(alpha)


def test_criterion_05_reading_dropout_retrieval():
    rows = {0.5: [], 0.9: []}
    for seed in range(10):
        frame, model = planted(seed)
        for pct in rows:
            imputed, baseline = ex.missing_reading_experiment(frame, pct, model, window=7,
                                                              seed=seed)
            rows[pct].append((imputed.precision, imputed.recall, baseline.recall))
    p50, r50, b50 = np.mean(rows[0.5], axis=0)
    p90, r90, b90 = np.mean(rows[0.9], axis=0)
    ok = (r50 - b50 >= 0.10) and p50 >= 0.9 and r90 > b90
    report(5, ok, f"50% dropout: precision {p50:.3f}, recall {r50:.3f} vs baseline {b50:.3f}; "
                  f"90% dropout: recall {r90:.3f} vs baseline {b90:.3f}")


def test_criterion_06_new_location_retrieval():
    prec, rec, base = [], [], []
    for seed in range(10):
        frame, model = planted(seed)
        rep = ex.missing_sensor_experiment(frame, 0.5, model, window=7, seed=seed)
        prec.append(rep.precision)
        rec.append(rep.recall)
        # the no-imputation baseline predicts no hotspot at a removed station
        base.append(0.0 if rep.tp + rep.fn else 1.0)
    p, r = float(np.mean(prec)), float(np.mean(rec))
    report(6, p >= 0.8 and r >= 0.8,
           f"50% stations removed, 10 seeds: precision {p:.3f}, recall {r:.3f} (each >= 0.8); "
           f"baseline recall {np.mean(base):.3f}")


def test_criterion_07_hotspot_fixtures():
    failures = []
    for name, (stats, kinds) in MONTH_CASES.items():
        if hs.classify_month(stats).kinds != kinds:
            failures.append(name)
    for name, (stats, stat) in ANNUAL_CASES.items():
        got = hs.classify_annual(stats).label
        if (got.statistic if got else None) != stat:
            failures.append(name)
    t0 = 1572566400
    day = t0 + 3600 * np.arange(24)
    half = np.where(np.arange(24) % 2 == 0, 40.0, np.nan)
    six = np.where(np.arange(24) < 6, 200.0, np.nan)
    daily = [hs.daily_stats(day, np.full(24, 80.0))[0].mean == 80.0,
             hs.daily_stats(day, six)[0].mean is None,
             hs.daily_stats(day, half)[0].mean == 40.0]
    if not all(daily):
        failures.append("daily_stats")
    lab = lambda loc, per, kind: hs.HotspotLabel(loc, per, kind, 1.0, 0.0, "public")
    counts = hs.count_hotspots([lab("P", p, "scale") for p in ("2019-01", "2019-02", "2019-03")]
                               + [lab("P", "2019-01", "frequency")])
    if sum(c["detected"] for c in counts.values()) != 3:
        failures.append("count_hotspots")
    n = len(MONTH_CASES) + len(ANNUAL_CASES) + len(daily) + 1
    report(7, not failures, f"{n - len(failures)}/{n} fixtures exact"
                            + (f"; failed: {failures}" if failures else ""))


def test_criterion_08_plume_closed_forms():
    coeffs = dp.stability_class("C")
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(200):
        Q, H = rng.uniform(0.1, 100), rng.uniform(0, 60)
        x, y, z, U = rng.uniform(20, 5000), rng.uniform(-300, 300), rng.uniform(0, 30), \
            rng.uniform(0.5, 10)
        c = dp.plume_concentration(dp.PlumeSource(Q, H), (x, y, z), U, coeffs)
        if c == 0:
            continue
        lin = dp.plume_concentration(dp.PlumeSource(3 * Q, H), (x, y, z), U, coeffs)
        sym = dp.plume_concentration(dp.PlumeSource(Q, H), (x, -y, z), U, coeffs)
        g = dp.plume_concentration(dp.PlumeSource(Q, 0.0), (x, y, 0.0), U, coeffs)
        g1 = dp.plume_concentration(dp.PlumeSource(Q, 0.0), (x, y, 0.0), U, coeffs,
                                    reflection=False)
        worst = max(worst, abs(lin / (3 * c) - 1), abs(sym / c - 1),
                    abs(g / (2 * g1) - 1) if g1 else 0.0)
    quad_err = 0.0
    for x, z, H in [(300.0, 5.0, 40.0), (2500.0, 0.0, 10.0), (900.0, 20.0, 1.5)]:
        src = dp.PlumeSource(7.0, H)
        sy_, sz = float(coeffs.sigma_y(x)), float(coeffs.sigma_z(x))
        num, _ = quad(lambda yy: dp.plume_concentration(src, (x, yy, z), 2.5, coeffs),
                      -40 * sy_, 40 * sy_, epsabs=0, epsrel=1e-12, limit=200)
        closed = 7.0 / (math.sqrt(2 * math.pi) * 2.5 * sz) * (
            math.exp(-(z - H) ** 2 / (2 * sz**2)) + math.exp(-(z + H) ** 2 / (2 * sz**2)))
        quad_err = max(quad_err, abs(num / closed - 1))
    a, c = 0.05, 4e-4
    custom = dp.StabilityCoeffs("custom", ((None, a, 1.0, c, 2.0, 0.0),), "m")
    q = np.random.default_rng(0).uniform(0.5, 2.0, (15, 15, 5))
    q[..., 2] = 0.0
    grid = dp.EmissionGrid((28.5, 77.1), 0.01, q)
    wind = dp.WindSeries([0.0, 3600.0], [3.0, 3.0], [270.0, 270.0])
    full = dp.sensor_concentration(grid, (7, 7), 0.0, wind, custom)
    simple = dp.sensor_concentration_simplified(grid, (7, 7), 0.0, wind, 1 / (math.pi * a * c))
    gap = abs(simple / full - 1)
    report(8, worst < 1e-6 and quad_err < 1e-6 and gap < 0.05,
           f"linearity/symmetry/doubling max rel err {worst:.1e}, quadrature {quad_err:.1e} "
           f"(< 1e-6); simplified vs full {gap:.2%} (< 5%)")


def test_criterion_09_inventory_and_traffic():
    rng = np.random.default_rng(9)
    worst, idem = 0.0, 0.0
    for _ in range(50):
        grid = dp.EmissionGrid((0.0, 0.0), 0.01, rng.uniform(0, 10, (6, 5, 3, 5)))
        totals = dict(zip(dp.SOURCES, rng.uniform(1e-3, 1e6, 5)))
        once = dp.normalize_inventory(grid, totals)
        twice = dp.normalize_inventory(once, totals)
        worst = max(worst, max(abs(once.totals[s] / totals[s] - 1) for s in dp.SOURCES))
        idem = max(idem, float(np.max(np.abs(twice.q - once.q) / np.maximum(once.q, 1e-300))))
    traffic = (dp.traffic_intensity(1, 1, 1) == 6 and dp.traffic_intensity(0, 0, 0) == 0
               and dp.traffic_intensity(10, 0, 0) == dp.traffic_intensity(0, 5, 0) == 10)
    report(9, worst < 1e-6 and idem < 1e-6 and traffic,
           f"total mismatch {worst:.1e}, idempotence {idem:.1e} (< 1e-6); traffic 1:2:3 "
           f"{'exact' if traffic else 'wrong'}")


def test_criterion_10_kde_exceedance():
    rng = np.random.default_rng(10)
    in_range, reversed_ok = True, True
    for _ in range(50):
        vals = rng.gamma(2.0, 40.0, (20, 20))
        vals.flat[rng.integers(400, size=40)] = vals.flat[0]
        f = fm.exceedance(vals).f.ravel()
        in_range &= bool(np.all((f >= 0) & (f <= 1)))
        order = np.argsort(vals.ravel(), kind="stable")
        reversed_ok &= bool(np.all(np.diff(f[order]) <= 0))
    sample = rng.normal(80.0, 15.0, 10_000)
    f_mu = float(fm.ExceedanceKDE().fit(sample).transform(np.array([80.0]))[0])
    ref = 1 - gaussian_kde(sample).integrate_box_1d(-np.inf, 80.0)
    ok = in_range and reversed_ok and abs(f_mu - 0.5) <= 0.02 and abs(f_mu - ref) < 1e-9
    report(10, ok, f"f in [0, 1]: {in_range}; order reversal: {reversed_ok}; "
                   f"f at the Normal mean {f_mu:.4f} (0.5 +/- 0.02)")


def test_criterion_11_adf_monte_carlo():
    start = time.perf_counter()
    noise = [adf_test(np.random.default_rng([11, s]).normal(size=2000)).stationary_at_0_05
             for s in range(100)]
    walks = [adf_test(np.cumsum(np.random.default_rng([12, s]).normal(size=2000)))
             .stationary_at_0_05 for s in range(100)]
    elapsed = time.perf_counter() - start
    rej_noise, rej_walk = float(np.mean(noise)), float(np.mean(walks))
    report(11, rej_noise >= 0.95 and rej_walk <= 0.10 and elapsed < 60,
           f"rejection: white noise {rej_noise:.2f} (>= 0.95), random walk {rej_walk:.2f} "
           f"(<= 0.10); {elapsed:.1f} s (< 60 s)")


def test_criterion_12_mlp_gradient_check():
    rng = np.random.default_rng(12)
    params = mlp.init_params(3, 32, rng)
    err = mlp.gradient_check(params, rng.uniform(0, 1, (10, 3)), rng.normal(size=10), 1e-5)
    report(12, err < 1e-4, f"max relative error {err:.1e} (< 1e-4)")


def test_criterion_13_cli_determinism(tmp_path):
    first = snapshot(run_all(tmp_path / "run"))
    shutil.rmtree(tmp_path / "run")
    second = snapshot(run_all(tmp_path / "run"))
    differing = sorted(k for k in first if first.get(k) != second.get(k))
    commands = {k.split("/")[0] for k in first}
    report(13, not differing and first.keys() == second.keys(),
           f"{len(commands)} runs covering all 10 subcommands, {len(first)} files, "
           f"{len(differing)} differ")
