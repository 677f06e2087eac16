import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqkrige import datamodel as dm
from aqkrige.exceptions import DataError, InsufficientDataError, ParseError

CATALOG = "id,lat,lon,network\nA,28.60,77.20,public\nB,28.65,77.25,lowcost\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_same_bucket_readings_are_averaged(tmp_path):
    cat = write(tmp_path / "s.csv", CATALOG)
    rd = write(tmp_path / "r.csv", "timestamp,station_id,pm25\n"
               "2019-01-01T00:05:00Z,A,57.0\n2019-01-01T00:50:00Z,A,63.0\n"
               "2019-01-01T02:10:00Z,B,10\n")
    frame = dm.ingest_readings(cat, rd)
    assert frame.values[0, 0] == 60.0
    assert frame.n_times == 3
    assert not frame.present[1].any()
    assert frame.values[2, 1] == 10.0 and not frame.present[2, 0]


def test_values_above_cap_are_clamped_and_counted(tmp_path):
    cat = write(tmp_path / "s.csv", CATALOG)
    rd = write(tmp_path / "r.csv", "timestamp,station_id,pm25\n"
               "2019-01-01T00:00:00Z,A,1200\n2019-01-01T00:00:00Z,B,999\n")
    frame = dm.ingest_readings(cat, rd)
    assert frame.values[0, 0] == 1000.0
    assert frame.saturated == 1


def test_duplicate_station_id_rejected(tmp_path):
    cat = write(tmp_path / "s.csv", CATALOG + "A,28.7,77.3,lowcost\n")
    with pytest.raises(ParseError, match="duplicate"):
        dm.read_station_catalog(cat)


@pytest.mark.parametrize("row, needle", [
    ("2019-01-01T00:00:00Z,A,abc", "pm25"),
    ("not-a-time,A,5", "timestamp"),
    ("2019-01-01T00:00:00Z,Z,5", "unknown station"),
    ("2019-01-01T00:00:00Z,A", "fields"),
])
def test_parse_errors_report_line_numbers(tmp_path, row, needle):
    cat = write(tmp_path / "s.csv", CATALOG)
    rd = write(tmp_path / "r.csv", "timestamp,station_id,pm25\n2019-01-01T00:00:00Z,A,5\n"
               + row + "\n")
    with pytest.raises(ParseError, match=needle) as err:
        dm.ingest_readings(cat, rd)
    assert err.value.line == 3
    assert ":3:" in str(err.value)


def test_step_must_divide_a_day(tmp_path):
    cat = write(tmp_path / "s.csv", CATALOG)
    rd = write(tmp_path / "r.csv", "timestamp,station_id,pm25\n2019-01-01T00:00:00Z,A,5\n")
    with pytest.raises(DataError):
        dm.ingest_readings(cat, rd, step=7000)


def test_out_of_range_coordinates_rejected():
    with pytest.raises(DataError):
        dm.Station("x", 91.0, 0.0)
    with pytest.raises(DataError):
        dm.Station("x", 0.0, 181.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_bucketing_is_idempotent(tmp_path_factory, seed):
    tmp = tmp_path_factory.mktemp("idem")
    rng = np.random.default_rng(seed)
    n_t = int(rng.integers(1, 30))
    vals = rng.uniform(0, 1000, (n_t, 2)).round(3)
    vals[rng.random(vals.shape) < 0.3] = np.nan
    vals[0, 0] = 5.0
    frame = dm.frame_from_arrays(1546300800 + 3600 * np.arange(n_t), [28.6, 28.7], [77.2, 77.3],
                                 vals, ids=["A", "B"])
    dm.write_station_catalog(tmp / "s.csv", frame.stations)
    dm.write_readings(tmp / "r.csv", frame)
    again = dm.ingest_readings(tmp / "s.csv", tmp / "r.csv")
    n = again.n_times
    np.testing.assert_array_equal(again.present, frame.present[:n])
    np.testing.assert_array_equal(again.values[again.present], frame.values[:n][frame.present[:n]])
    assert not frame.present[n:].any()


def daily_frame(values_fn, n_days=20, n_st=3, missing=0.0, seed=0):
    hours = np.arange(24 * n_days)
    times = 1546300800 + 3600 * hours
    rng = np.random.default_rng(seed)
    vals = np.column_stack([values_fn(hours, k) for k in range(n_st)])
    vals = np.where(rng.random(vals.shape) < missing, np.nan, vals)
    return dm.frame_from_arrays(times, 28.6 + 0.01 * np.arange(n_st), np.full(n_st, 77.2), vals)


def test_constant_frame_detrends_to_zero():
    frame = daily_frame(lambda h, k: np.full(len(h), 100.0))
    out, state = dm.preprocess(frame)
    assert out.unit == dm.DETRENDED_UNIT
    np.testing.assert_allclose(out.values, 0.0, atol=1e-9)
    assert state.log_applied


def test_roundtrip_restores_values():
    rng = np.random.default_rng(1)
    frame = daily_frame(lambda h, k: rng.gamma(2.0, 40.0, len(h)), missing=0.2)
    vals = frame.values.copy()
    vals[3, 0] = 0.0
    frame = frame.with_values(vals, frame.present)
    out, state = dm.preprocess(frame)
    assert np.array_equal(out.present, frame.present)
    back = dm.inverse_preprocess(out, state)
    p = frame.present
    np.testing.assert_allclose(back.values[p], frame.values[p], rtol=1e-9, atol=1e-9)
    assert back.unit == dm.RAW_UNIT


def test_seasonal_trend_reduces_spread():
    frame = daily_frame(lambda h, k: 100 * np.exp(np.sin(2 * np.pi * (h / 24.0) / 365 * 12)),
                        n_days=120, n_st=2)
    out, _ = dm.preprocess(frame)
    raw_log = np.log(frame.values + dm.LOG_SHIFT)
    assert np.nanstd(out.values) < np.nanstd(raw_log)


def test_spline_needs_four_days():
    frame = daily_frame(lambda h, k: np.full(len(h), 50.0), n_days=3)
    with pytest.raises(InsufficientDataError):
        dm.preprocess(frame)


def test_detrended_frame_cannot_be_preprocessed_twice():
    out, _ = dm.preprocess(daily_frame(lambda h, k: 50.0 + h % 7))
    with pytest.raises(DataError):
        dm.preprocess(out)


def test_frame_rejects_bad_shapes_and_values():
    with pytest.raises(DataError):
        dm.frame_from_arrays([0, 3600], [28.6], [77.2], [[1.0, 2.0]])
    with pytest.raises(DataError):
        dm.frame_from_arrays([0, 7200, 10800], [28.6], [77.2], [[1.0], [2.0], [3.0]])
    with pytest.raises(DataError):
        dm.frame_from_arrays([0], [28.6], [77.2], [[-1.0]])


def test_frame_is_immutable():
    frame = daily_frame(lambda h, k: np.full(len(h), 10.0), n_days=1)
    with pytest.raises(ValueError):
        frame.values[0, 0] = 3.0
