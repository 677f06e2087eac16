import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import gaussian_kde

from aqkrige import fieldmap as fm
from aqkrige import variogram as vg
from aqkrige.datamodel import frame_from_arrays
from aqkrige.exceptions import DataError

T0 = 1572566400  # 2019-11-01T00:00Z
BBOX = (28.50, 28.60, 77.10, 77.20)


def frame_at(lat, lon, values):
    return frame_from_arrays([T0], lat, lon, np.atleast_2d(values))


def test_single_sensor_cell_holds_its_reading():
    # sensor exactly on the center of cell (2, 3)
    frame = frame_at([28.525], [77.135], [[73.0]])
    model = vg.VariogramModel("exponential", 100.0, 5000.0)
    field = fm.render_field(frame, 0, model, window=1, bbox=BBOX, cell_deg=0.01)
    assert field.values.shape == (10, 10)
    assert field.values[2, 3] == pytest.approx(73.0)
    assert field.timestamp == T0


def test_constant_sensors_render_constant():
    rng = np.random.default_rng(0)
    frame = frame_at(rng.uniform(28.5, 28.6, 7), rng.uniform(77.1, 77.2, 7), np.full(7, 42.0))
    field = fm.render_field(frame, 0, vg.VariogramModel("spherical", 50.0, 8000.0, 1.0),
                            window=1, bbox=BBOX)
    np.testing.assert_allclose(field.values, 42.0, rtol=1e-10)


def test_coarse_render_samples_fine_render():
    # a coarse cell three times wider shares its center with the middle fine cell
    rng = np.random.default_rng(1)
    frame = frame_at(rng.uniform(28.5, 28.62, 9), rng.uniform(77.1, 77.22, 9),
                     rng.uniform(20, 200, 9))
    model = vg.VariogramModel("gaussian", 900.0, 9000.0, 5.0)
    bbox = (28.50, 28.62, 77.10, 77.22)
    fine = fm.render_field(frame, 0, model, window=1, bbox=bbox, cell_deg=0.01)
    coarse = fm.render_field(frame, 0, model, window=1, bbox=bbox, cell_deg=0.03)
    np.testing.assert_allclose(coarse.values, fine.values[1::3, 1::3], rtol=1e-9)


def test_render_without_samples_fails():
    frame = frame_at([28.55], [77.15], [[np.nan]])
    with pytest.raises(DataError):
        fm.render_field(frame, 0, vg.VariogramModel("spherical", 1.0, 1000.0), window=1,
                        bbox=BBOX)


def test_kde_matches_scipy_reference():
    x = np.random.default_rng(2).gamma(2.0, 30.0, 400)
    ref = gaussian_kde(x, bw_method="scott")
    kde = fm.ExceedanceKDE().fit(x)
    assert kde.bandwidth_ == pytest.approx(float(np.sqrt(ref.covariance[0, 0])), rel=1e-12)
    probe = np.linspace(x.min() - 20, x.max() + 20, 25)
    want = [ref.integrate_box_1d(-np.inf, p) for p in probe]
    np.testing.assert_allclose(kde.cdf(probe), want, atol=1e-9)
    np.testing.assert_allclose(kde.transform(probe), 1 - np.array(want), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(2, 12))
def test_exceedance_range_and_order_reversal(seed, rows, cols):
    rng = np.random.default_rng(seed)
    vals = rng.choice(rng.uniform(0, 300, 5), size=(rows, cols))
    vals[0, 0], vals[-1, -1] = 1.0, 250.0
    exc = fm.exceedance(vals)
    assert np.all((exc.f >= 0) & (exc.f <= 1))
    v, f = vals.ravel(), exc.f.ravel()
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(f[order]) <= 0)
    assert f[np.argmax(v)] == f.min()


def test_normal_sample_median_sits_at_half():
    x = np.random.default_rng(3).normal(80.0, 15.0, 10_000).reshape(100, 100)
    f_mu = fm.ExceedanceKDE().fit(x).transform(np.array([80.0]))[0]
    assert abs(f_mu - 0.5) <= 0.02


def test_constant_field_has_no_exceedance():
    with pytest.raises(DataError):
        fm.exceedance(np.full((4, 4), 9.0))


def bump(n=30, center=(20, 8), width=4.0):
    r, c = np.mgrid[0:n, 0:n]
    return 40 + 200 * np.exp(-((r - center[0]) ** 2 + (c - center[1]) ** 2) / (2 * width**2))


def test_boundary_masks_nest():
    exc = fm.exceedance(bump())
    small = fm.boundary(exc, 0.01).mask
    large = fm.boundary(exc, 0.05).mask
    assert small.any() and np.all(large[small])
    assert fm.boundary(exc, 1 - 1e-9).mask.mean() > 0.99


def test_single_bump_gives_one_component_around_the_peak():
    exc = fm.exceedance(bump())
    result = fm.boundary(exc, 0.05)
    labels, n = fm.components(result.mask)
    assert n == 1
    assert labels[20, 8] == 1
    assert len(result.outlines) == 1
    ring = result.outlines[0]
    np.testing.assert_allclose(ring[0], ring[-1])


def test_boundary_threshold_validated_and_empty_mask_valid():
    exc = fm.exceedance(bump())
    with pytest.raises(DataError):
        fm.boundary(exc, 1.0)
    empty = fm.boundary(fm.ExceedanceField(exc.phi, np.ones_like(exc.f)), 0.5)
    assert not empty.mask.any() and empty.outlines == []


def test_boundary_vertices_in_lat_lon(tmp_path):
    exc = fm.exceedance(bump(n=10, center=(5, 5), width=1.5))
    result = fm.boundary(exc, 0.1, bbox=BBOX, cell_deg=0.01)
    fm.write_boundary(tmp_path / "b.json", result)
    doc = json.loads((tmp_path / "b.json").read_text())
    assert doc["vertex_order"] == ["lat", "lon"]
    pts = np.array([p for poly in doc["polygons"] for p in poly])
    assert np.all((pts[:, 0] > BBOX[0]) & (pts[:, 0] < BBOX[1]))
    assert np.all((pts[:, 1] > BBOX[2]) & (pts[:, 1] < BBOX[3]))


def hourly_fields(value_fn, n_hours, shape=(4, 4)):
    bbox = (28.5, 28.5 + 0.01 * shape[0], 77.1, 77.1 + 0.01 * shape[1])
    return [fm.GridField(bbox, 0.01, value_fn(h), T0 + 3600 * h) for h in range(n_hours)]


@pytest.mark.parametrize("level, expected", [(150.0, 2), (10.0, 0)])
def test_constant_fields_over_two_months(level, expected):
    fields = hourly_fields(lambda h: np.full((2, 2), level), 24 * 61, shape=(2, 2))
    raster = fm.hotspot_frequency(fields)
    assert raster.months == ("2019-11", "2019-12")
    assert raster.partial_months == ()
    np.testing.assert_array_equal(raster.counts, expected)


def test_hot_northwest_quadrant_only():
    hot = np.full((4, 4), 20.0)
    hot[2:, :2] = 160.0  # rows grow northwards, columns eastwards
    raster = fm.hotspot_frequency(hourly_fields(lambda h: hot, 24 * 30))
    assert np.all(raster.counts[2:, :2] == 1)
    assert raster.counts.sum() == 4


def test_partial_month_flagged():
    raster = fm.hotspot_frequency(hourly_fields(lambda h: np.full((1, 1), 5.0), 24 * 3,
                                                shape=(1, 1)))
    assert raster.partial_months == ("2019-11",)


def test_exposure_examples():
    freq = np.array([[0.0, 1.0], [2.0, 4.0]])
    pop = np.array([[5.0, 0.0], [10.0, 20.0]])
    exp = fm.exposure_map(freq, pop)
    assert exp[0, 1] == 0.0
    assert exp[1, 1] == 1.0
    assert np.all((exp >= 0) & (exp <= 1))
    uniform = fm.exposure_map(freq, np.full((2, 2), 3.0))
    np.testing.assert_allclose(uniform, freq / 4.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-50, 50), st.floats(0.01, 100),
       st.floats(-50, 50))
def test_exposure_affine_invariance(seed, a, b, c, d):
    rng = np.random.default_rng(seed)
    freq = rng.integers(0, 6, (5, 5)).astype(float)
    pop = rng.uniform(0, 1e4, (5, 5))
    freq[0, 0], freq[1, 1] = 0.0, 5.0
    np.testing.assert_allclose(fm.exposure_map(a * freq + b, c * pop + d),
                               fm.exposure_map(freq, pop), atol=1e-9)


def test_exposure_rejects_mismatched_grids():
    with pytest.raises(DataError):
        fm.exposure_map(np.zeros((2, 2)), np.zeros((3, 2)))
    a = fm.GridField(BBOX, 0.01, np.zeros((10, 10)))
    b = fm.GridField((28.51, 28.61, 77.10, 77.20), 0.01, np.zeros((10, 10)))
    with pytest.raises(DataError):
        fm.exposure_map(a, b)


def test_grid_csv_roundtrip(tmp_path):
    vals = np.arange(12.0).reshape(3, 4)
    vals[1, 2] = np.nan
    field = fm.GridField((28.5, 28.53, 77.1, 77.14), 0.01, vals)
    fm.write_grid_csv(tmp_path / "g.csv", field.values, field.bbox, field.cell_deg)
    back = fm.read_grid_field(tmp_path / "g.csv")
    assert back.same_grid(field)
    np.testing.assert_array_equal(back.values, vals)


def test_png_is_written(tmp_path):
    fm.write_png(tmp_path / "f.png", np.array([[0.0, np.nan], [50.0, 100.0]]), 0, 100)
    assert (tmp_path / "f.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    rgb = fm.colorize(np.array([0.0, 100.0, np.nan]), 0, 100)
    assert tuple(rgb[2]) == fm.MISSING_RGB
    assert tuple(rgb[0]) != tuple(rgb[1])
