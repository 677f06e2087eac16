"""Command-line entry point.

Every run writes its artifacts plus a ``manifest.json`` echoing the resolved
configuration. ``--out`` naming a file (it has a suffix) writes that file
and a ``<name>.manifest.json`` beside it; otherwise ``--out`` is a directory.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import dispersion as disp
from . import fieldmap as fm
from . import hotspot as hs
from . import kriging as kr
from . import variogram as vg
from .datamodel import (
    DEFAULT_CAP,
    DEFAULT_STEP,
    format_timestamp,
    ingest_readings,
    parse_timestamp,
    preprocess,
    write_frame_wide,
    write_readings,
    write_station_catalog,
)
from .eval import experiments as ex
from .eval import synth
from .exceptions import DataError
from .stationarity import adf_test


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class Output:
    """Resolve ``--out`` into a primary artifact, side artifacts and a manifest."""

    def __init__(self, out, default_name):
        path = Path(out)
        if path.suffix:
            self.single = path
            self.dir = path.parent
            self.primary = path
            self.manifest = path.with_name(path.name + ".manifest.json")
        else:
            self.single = None
            self.dir = path
            self.primary = path / default_name
            self.manifest = path / "manifest.json"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written = [self.primary]

    def side(self, name):
        if self.single is not None:
            p = self.single.with_name(f"{self.single.stem}.{name}")
        else:
            p = self.dir / name
        self.written.append(p)
        return p

    def write_manifest(self, args, results=None):
        config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
        doc = {
            "version": __version__,
            "config": config,
            "outputs": [p.name for p in self.written],
            "results": results or {},
        }
        with open(self.manifest, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# -- argument helpers -----------------------------------------------------

def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"{name} needs {n} comma-separated numbers, got {text!r}")
    return vals


def _pairs(text, name):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        key, sep, val = item.partition("=")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise UsageError(f"{name} must look like key=number,..., got {text!r}") from None
        if not sep:
            raise UsageError(f"{name} must look like key=number,..., got {text!r}")
    return out


def _bbox(args):
    if args.bbox is None:
        return None
    lat_min, lat_max, lon_min, lon_max = _floats(args.bbox, 4, "--bbox")
    return (lat_min, lat_max, lon_min, lon_max)


def _threads(args):
    return args.threads or os.cpu_count() or 1


def _load_frame(args):
    if not args.readings or not args.stations:
        raise UsageError("--readings and --stations are required")
    return ingest_readings(args.stations, args.readings, step=args.step, cap=args.cap)


def _time_index(frame, args):
    if getattr(args, "time", None):
        t = parse_timestamp(args.time)
        hits = np.flatnonzero(frame.times == (t // frame.step) * frame.step)
        if len(hits) == 0:
            raise DataError(f"time {args.time} is outside the readings span")
        return int(hits[0])
    t = getattr(args, "t_index", 0)
    if not -frame.n_times <= t < frame.n_times:
        raise DataError(f"timestep index {t} out of range for {frame.n_times} timesteps")
    return t % frame.n_times


def _resolve_model(args, frame, window):
    """Load ``--model`` or fit one; pick alpha when a window spans time."""
    info = {}
    if getattr(args, "model", None):
        model = vg.load_model(args.model)
    else:
        model = ex.fit_frame_model(frame, args.variogram, n_bins=args.n_bins)
    if getattr(args, "alpha", None) is not None:
        model = model.with_alpha(args.alpha)
    elif window > 1 and model.alpha <= 0:
        alpha, scores = ex.select_alpha(frame, model, window=window, seed=args.seed)
        model = model.with_alpha(alpha)
        info["alpha_scores"] = {repr(k): v for k, v in scores.items()}
    info["model"] = model.to_dict()
    return model, info


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return repr(float(v))


# -- subcommands ------------------------------------------------------------

def cmd_ingest(args):
    frame = _load_frame(args)
    out = Output(args.out, "frame.csv")
    write_frame_wide(out.primary, frame)
    write_station_catalog(out.side("stations.csv"), frame.stations)
    write_readings(out.side("readings.csv"), frame)
    out.write_manifest(args, {
        "n_times": frame.n_times,
        "n_stations": frame.n_stations,
        "saturated": frame.saturated,
        "missing_fraction": float(1.0 - frame.present.mean()),
        "start": format_timestamp(frame.times[0]),
        "end": format_timestamp(frame.times[-1]),
    })


def cmd_variogram(args):
    frame = _load_frame(args)
    results = {}
    if args.detrend:
        frame, _ = preprocess(frame, tz_offset_minutes=args.tz_offset)
        counts = frame.present.sum(axis=1)
        network_mean = np.where(counts > 0, np.nansum(frame.values, axis=1) / np.maximum(counts, 1),
                                np.nan)
        try:
            adf = adf_test(network_mean)
            results["adf"] = {"statistic": adf.statistic, "p_bracket": adf.p_bracket,
                              "stationary_at_0_05": adf.stationary_at_0_05, "nobs": adf.nobs}
        except DataError as exc:
            results["adf"] = {"error": str(exc)}
    emp = vg.pooled_variogram(frame, n_bins=args.n_bins)
    model, info = _resolve_model(args, frame, args.window)
    results.update(info)
    out = Output(args.out, "variogram.json")
    vg.save_model(out.primary, model)
    _write_rows(out.side("empirical.csv"), ["lag_m", "gamma", "pairs"],
                [[_num(h), _num(g), int(c)] for h, g, c in emp.bins])
    out.write_manifest(args, results)


def _targets(args, frame):
    if args.targets:
        with open(args.targets, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"id", "lat", "lon"} <= set(reader.fieldnames):
                raise DataError(f"{args.targets}: expected columns id,lat,lon")
            rows = list(reader)
        try:
            return ([r["id"] for r in rows], np.array([float(r["lat"]) for r in rows]),
                    np.array([float(r["lon"]) for r in rows]))
        except ValueError:
            raise DataError(f"{args.targets}: non-numeric coordinate") from None
    bbox = _bbox(args) or fm.station_bbox(frame, args.cell_deg)
    lat, lon = fm.cell_centers(bbox, args.cell_deg)
    ids = [f"r{r}c{c}" for r in range(len(lat)) for c in range(len(lon))]
    glat, glon = np.meshgrid(lat, lon, indexing="ij")
    return ids, glat.ravel(), glon.ravel()


def cmd_interpolate(args):
    frame = _load_frame(args)
    state = None
    work = frame
    if args.detrend:
        work, state = preprocess(frame, tz_offset_minutes=args.tz_offset)
    model, info = _resolve_model(args, work, args.window)
    ids, lat, lon = _targets(args, frame)
    lo = _time_bound(frame, args.start, 0)
    hi = _time_bound(frame, args.end, frame.n_times - 1) + 1
    t_indices = list(range(lo, hi))
    pred, var = kr.interpolate_series(work, lat, lon, model, window=args.window,
                                      refit=not args.global_model, n_bins=args.n_bins,
                                      t_indices=t_indices, n_jobs=_threads(args))
    if state is not None:
        pred = np.exp(pred + state.trend(frame.times[t_indices])[:, None]) - state.shift
        pred = np.clip(pred, 0.0, None)
    out = Output(args.out, "predictions.csv")
    rows = []
    for k, t in enumerate(t_indices):
        stamp = format_timestamp(frame.times[t])
        for m, tid in enumerate(ids):
            rows.append([stamp, tid, f"{lat[m]:.6f}", f"{lon[m]:.6f}", _num(pred[k, m]),
                         _num(var[k, m])])
    variance_unit = "log-detrended" if state is not None else frame.unit
    _write_rows(out.primary, ["timestamp", "target", "lat", "lon", "prediction", "variance"], rows)
    info.update({"n_targets": len(ids), "n_timesteps": len(t_indices),
                 "variance_unit": variance_unit})
    out.write_manifest(args, info)


def _time_bound(frame, text, default):
    if not text:
        return default
    t = parse_timestamp(text)
    k = int(np.clip((t - frame.times[0]) // frame.step, 0, frame.n_times - 1))
    return k


def _rules(args):
    return hs.DEFAULT_RULES.scaled(args.scale_factor) if args.scale_factor != 1.0 \
        else hs.DEFAULT_RULES


def cmd_hotspots(args):
    frame = _load_frame(args)
    results = hs.classify_frame(frame, _rules(args), args.tz_offset, args.year_mode)
    labels = [lab for r in results for lab in r.labels]
    counts = hs.count_hotspots(labels, {s.id: s.network for s in frame.stations})
    out = Output(args.out, "labels.csv")
    hs.write_labels(out.primary, labels)
    hs.write_counts(out.side("counts.csv"), counts)
    insufficient = sorted(f"{r.location_id}:{m.period}" for r in results for m in r.months
                          if m.insufficient)
    out.write_manifest(args, {"n_labels": len(labels), "counts": counts,
                              "insufficient_location_months": insufficient})


def _eval_frame(args):
    if args.readings or args.stations:
        return _load_frame(args), "readings"
    spec = synth.PlantedNetworkSpec(seed=args.seed)
    return synth.planted_hotspot_network(spec).frame, "planted-synthetic"


def _report_rows(reports, config):
    keys = []
    for r in reports:
        for k in r.as_row():
            if k not in keys:
                keys.append(k)
    blob = json.dumps(config, sort_keys=True, default=_jsonable)
    rows = []
    for r in reports:
        row = r.as_row()
        rows.append([_cell(row.get(k, "")) for k in keys] + [blob])
    return keys + ["config"], rows


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return _num(v)
    return str(v)


def cmd_evaluate(args):
    frame, source = _eval_frame(args)
    threads = _threads(args)
    window = 1 if getattr(args, "model_kind", None) == "kriging" else args.window
    results = {"data_source": source}
    if getattr(args, "model_kind", None) != "mlp":
        model, info = _resolve_model(args, frame, window)
        results.update(info)
    else:
        model = None
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    config["data_source"] = source
    if model is not None:
        config["model"] = model.to_dict()
    out = Output(args.out, "report.csv")

    if args.experiment == "split":
        m = ex.interpolation_split_eval(frame, args.model_kind, window, args.seed, args.repeats,
                                        model=model, max_timesteps=args.max_timesteps,
                                        family=args.variogram, n_jobs=threads)
        header = ["model_kind", "mape", "rmse", "n", "mape_se", "rmse_se", "mape_excludes",
                  "config"]
        row = [args.model_kind, _num(m.mape), _num(m.rmse), m.n, _num(m.mape_se),
               _num(m.rmse_se), "truth<=0", json.dumps(config, sort_keys=True,
                                                         default=_jsonable)]
        _write_rows(out.primary, header, [row])
        summary = (f"{args.model_kind}: MAPE {m.mape:.2f}% +/- {m.mape_se:.2f}, "
                   f"RMSE {m.rmse:.3f} +/- {m.rmse_se:.3f} over {m.n} cells")
    else:
        if args.experiment == "missing-sensors":
            reports = [ex.missing_sensor_experiment(frame, args.pct, model, window, args.seed,
                                                    detrend=args.detrend,
                                                    tz_offset_minutes=args.tz_offset,
                                                    n_jobs=threads)]
        elif args.experiment == "missing-readings":
            reports = list(ex.missing_reading_experiment(frame, args.pct, model, window,
                                                         args.seed, detrend=args.detrend,
                                                         tz_offset_minutes=args.tz_offset,
                                                         n_jobs=threads))
        else:
            factors = _floats(args.factors, name="--factors")
            reports = ex.threshold_sweep(frame, factors, args.pct, model, window, args.seed,
                                         detrend=args.detrend, tz_offset_minutes=args.tz_offset,
                                         n_jobs=threads)
        header, rows = _report_rows(reports, config)
        _write_rows(out.primary, header, rows)
        summary = "\n".join(
            f"{'baseline' if r.condition.get('baseline') else 'pipeline'}"
            f"{' x' + repr(r.condition['scale_factor']) if 'scale_factor' in r.condition else ''}"
            f": precision {r.precision:.3f} recall {r.recall:.3f} "
            f"(tp {r.tp}, fp {r.fp}, fn {r.fn}{', vacuous' if r.vacuous else ''})"
            for r in reports)
        results["reports"] = [r.as_row() for r in reports]
    with open(out.side("summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary + "\n")
    print(summary)
    out.write_manifest(args, results)


def cmd_heatmap(args):
    frame = _load_frame(args)
    model, info = _resolve_model(args, frame, args.window)
    bbox = _bbox(args) or fm.station_bbox(frame, args.cell_deg)
    out = Output(args.out, "frequency.csv" if args.frequency else "field.csv")
    if args.frequency:
        fields = fm.render_fields(frame, model, args.window, bbox, args.cell_deg,
                                  refit=not args.global_model, n_jobs=_threads(args))
        freq = fm.hotspot_frequency(fields, hs.DEFAULT_RULES, args.tz_offset, frame.step)
        fm.write_grid_csv(out.primary, freq.counts, bbox, args.cell_deg)
        vmax = max(len(freq.months), 1)
        fm.write_png(out.side("frequency.png"), freq.counts, 0.0, vmax)
        info.update({"months": list(freq.months), "partial_months": list(freq.partial_months)})
    else:
        t = _time_index(frame, args)
        field = fm.render_field(frame, t, model, args.window, bbox, args.cell_deg,
                                refit=not args.global_model)
        fm.write_grid_csv(out.primary, field.values, bbox, args.cell_deg)
        exc = fm.exceedance(field)
        fm.write_grid_csv(out.side("exceedance.csv"), exc.f, bbox, args.cell_deg)
        finite = field.values[np.isfinite(field.values)]
        vmin = args.vmin if args.vmin is not None else 0.0
        vmax = args.vmax if args.vmax is not None else float(finite.max())
        if vmax <= vmin:
            vmax = vmin + 1.0
        fm.write_png(out.side("field.png"), field.values, vmin, vmax)
        info.update({"timestamp": format_timestamp(frame.times[t]), "vmin": vmin, "vmax": vmax})
    info.update({"bbox": list(bbox), "color_ramp": [[p, list(c)] for p, c in fm.COLOR_RAMP]})
    out.write_manifest(args, info)


def cmd_boundary(args):
    field = fm.read_grid_field(args.field, cell_deg=args.cell_deg)
    exc = fm.exceedance(field)
    result = fm.boundary(exc, args.threshold, field.bbox, field.cell_deg)
    out = Output(args.out, "boundary.json")
    fm.write_boundary(out.primary, result)
    fm.write_grid_csv(out.side("mask.csv"), result.mask.astype(float), field.bbox,
                      field.cell_deg)
    _, n = fm.components(result.mask)
    out.write_manifest(args, {"components": int(n), "polygons": len(result.outlines),
                              "cells": int(result.mask.sum())})


def cmd_exposure(args):
    freq = fm.read_grid_field(args.frequency, cell_deg=args.cell_deg)
    pop = fm.read_population_csv(args.population)
    if pop.shape != freq.values.shape:
        raise DataError(f"population raster {pop.shape} does not match frequency raster "
                        f"{freq.values.shape}")
    exposure = fm.exposure_map(freq.values, pop)
    out = Output(args.out, "exposure.csv")
    fm.write_grid_csv(out.primary, exposure, freq.bbox, freq.cell_deg)
    fm.write_png(out.side("exposure.png"), exposure, 0.0, 1.0)
    out.write_manifest(args, {"max": _num(np.nanmax(exposure))})


def cmd_disperse(args):
    origin = _floats(args.origin, 2, "--origin")
    shape = tuple(int(v) for v in _floats(args.shape, 2, "--shape")) if args.shape else None
    grid = disp.read_inventory(args.inventory, origin, args.cell_deg, shape)
    totals = _pairs(args.totals, "--totals")
    if totals:
        grid = disp.normalize_inventory(grid, totals)
    wind = disp.read_wind(args.wind)
    t = parse_timestamp(args.time) if args.time else int(wind.times[0])
    heights = _pairs(args.heights, "--heights")
    coeffs = disp.stability_class(args.stability)
    conc = np.zeros((grid.n_rows, grid.n_cols))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for i in range(grid.n_rows):
            for j in range(grid.n_cols):
                if args.simplified:
                    conc[i, j] = disp.sensor_concentration_simplified(
                        grid, (i, j), t, wind, args.scale, args.half_width)
                else:
                    conc[i, j] = disp.sensor_concentration(
                        grid, (i, j), t, wind, coeffs, heights, args.z, args.half_width)
    truncated = sum(1 for w in caught if "truncated" in str(w.message))
    out = Output(args.out, "concentration.csv")
    bbox = (origin[0], origin[0] + grid.n_rows * args.cell_deg,
            origin[1], origin[1] + grid.n_cols * args.cell_deg)
    fm.write_grid_csv(out.primary, conc, bbox, args.cell_deg)
    vmax = float(conc.max()) if conc.max() > 0 else 1.0
    fm.write_png(out.side("concentration.png"), conc, 0.0, vmax)
    speed, direction = disp.wind_at(wind, t)
    out.write_manifest(args, {"timestamp": format_timestamp(t), "wind_speed": speed,
                              "wind_direction": direction, "truncated_blocks": truncated,
                              "totals": grid.totals})


def cmd_synth(args):
    out = Output(args.out, "readings.csv")
    if args.kind == "planted":
        spec = synth.PlantedNetworkSpec(n_stations=args.n_stations, n_days=args.days,
                                        seed=args.seed)
        net = synth.planted_hotspot_network(spec)
        frame = net.frame
        _write_rows(out.side("blobs.csv"),
                    ["kind", "east_m", "north_m", "first_day", "last_day"],
                    [[k, _num(e), _num(n), a, b] for k, e, n, a, b in net.blobs])
        results = {"spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__}}
    else:
        model = vg.VariogramModel(args.variogram, args.sill, args.range, args.nugget, args.alpha)
        spec = synth.SyntheticFieldSpec(model, n_steps=args.steps, n_stations=args.n_stations,
                                        mean=args.mean, noise_sd=args.noise_sd,
                                        exponentiate=True, seed=args.seed, start=args.start)
        sf = synth.synth_field(spec)
        frame = sf.frame
        truth = frame.with_values(np.minimum(sf.truth, frame.cap), np.ones(sf.truth.shape, bool))
        write_frame_wide(out.side("truth.csv"), truth)
        results = {"model": model.to_dict()}
    write_readings(out.primary, frame)
    write_station_catalog(out.side("stations.csv"), frame.stations)
    results.update({"n_times": frame.n_times, "n_stations": frame.n_stations})
    out.write_manifest(args, results)


# -- parser ---------------------------------------------------------------------

def _add_common(p, data=True, model=False, grid=False):
    p.add_argument("--out", required=True, help="output directory or file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all cores); results do not depend on it")
    if data:
        p.add_argument("--readings", help="long-format CSV timestamp,station_id,pm25")
        p.add_argument("--stations", help="station catalog CSV id,lat,lon,network")
        p.add_argument("--step", type=int, default=DEFAULT_STEP, help="bucket size in seconds")
        p.add_argument("--cap", type=float, default=DEFAULT_CAP, help="sensor saturation cap")
        p.add_argument("--tz-offset", type=int, default=0,
                       help="local time offset in minutes for daily aggregation")
    if model:
        p.add_argument("--variogram", choices=vg.FAMILIES, default="spherical")
        p.add_argument("--model", help="variogram JSON; fitted from the data when omitted")
        p.add_argument("--alpha", type=float, default=None,
                       help="space-time anisotropy in m/s (selected by grid search if omitted)")
        p.add_argument("--window", type=int, default=7, help="odd number of timesteps")
        p.add_argument("--n-bins", type=int, default=15)
    if grid:
        p.add_argument("--bbox", help="lat_min,lat_max,lon_min,lon_max")
        p.add_argument("--cell-deg", type=float, default=0.01)


def build_parser():
    parser = Parser(prog="aqkrige", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("ingest", help="normalise raw readings onto a regular time grid")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("variogram", help="fit a variogram model")
    _add_common(p, model=True)
    p.add_argument("--detrend", action="store_true",
                   help="fit on log-detrended values and report an ADF test")
    p.set_defaults(func=cmd_variogram)

    p = sub.add_parser("interpolate", help="krige values at targets or grid cells")
    _add_common(p, model=True, grid=True)
    p.add_argument("--targets", help="CSV id,lat,lon (default: every cell of the grid)")
    p.add_argument("--start", help="first timestamp to interpolate")
    p.add_argument("--end", help="last timestamp to interpolate")
    p.add_argument("--global-model", action="store_true",
                   help="use one variogram for all windows instead of refitting per window")
    p.add_argument("--detrend", action="store_true", help="krige log-detrended values")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("hotspots", help="label hotspot location-months and years")
    _add_common(p)
    p.add_argument("--year-mode", choices=("calendar", "study"), default="calendar")
    p.add_argument("--scale-factor", type=float, default=1.0,
                   help="multiply the monthly thresholds")
    p.set_defaults(func=cmd_hotspots)

    p = sub.add_parser("evaluate", help="run an evaluation protocol")
    esub = p.add_subparsers(dest="experiment", metavar="EXPERIMENT", required=True)
    for name, helptext in (("split", "80/20 interpolation accuracy"),
                           ("missing-sensors", "retrieval at removed stations"),
                           ("missing-readings", "retrieval under random reading dropout"),
                           ("sweep", "missing-sensor retrieval over threshold scales")):
        q = esub.add_parser(name, help=helptext)
        _add_common(q, model=True)
        q.add_argument("--detrend", action="store_true", help="krige log-detrended values")
        if name == "split":
            q.add_argument("--model-kind", choices=("kriging", "st_kriging", "mlp"),
                           default="st_kriging")
            q.add_argument("--repeats", type=int, default=5)
            q.add_argument("--max-timesteps", type=int, default=None)
        else:
            q.add_argument("--pct", type=float, default=0.5)
        if name == "sweep":
            q.add_argument("--factors", default="0.5,0.75,1.0,1.25,1.5")
        q.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="render a kriged field or a hotspot-frequency raster")
    _add_common(p, model=True, grid=True)
    p.add_argument("--time", help="timestamp to render (default: first)")
    p.add_argument("--t-index", type=int, default=0)
    p.add_argument("--frequency", action="store_true",
                   help="count hotspot months per cell over the whole span")
    p.add_argument("--global-model", action="store_true")
    p.add_argument("--vmin", type=float, default=None)
    p.add_argument("--vmax", type=float, default=None)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("boundary", help="outline the high-exceedance region of a field")
    _add_common(p, data=False)
    p.add_argument("--field", required=True, help="grid CSV written by heatmap")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--cell-deg", type=float, default=None)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("exposure", help="combine hotspot frequency with population density")
    _add_common(p, data=False)
    p.add_argument("--frequency", required=True, help="frequency grid CSV")
    p.add_argument("--population", required=True, help="grid CSV row,col,density on the frequency grid")
    p.add_argument("--cell-deg", type=float, default=None)
    p.set_defaults(func=cmd_exposure)

    p = sub.add_parser("disperse", help="plume concentrations from an emissions inventory")
    _add_common(p, data=False)
    p.add_argument("--inventory", required=True)
    p.add_argument("--origin", required=True, help="lat,lon of the grid's south-west corner")
    p.add_argument("--cell-deg", type=float, default=0.01)
    p.add_argument("--shape", help="rows,cols (default: from the inventory)")
    p.add_argument("--wind", required=True, help="CSV timestamp,speed_ms,direction_deg")
    p.add_argument("--time", help="timestamp (default: first wind record)")
    p.add_argument("--stability", default="C")
    p.add_argument("--heights", help="effective heights per source, e.g. b=41,p=300")
    p.add_argument("--totals", help="rescale source totals, e.g. b=100,v=40")
    p.add_argument("--z", type=float, default=disp.RECEPTOR_Z)
    p.add_argument("--half-width", type=int, default=disp.SOURCE_HALF_WIDTH)
    p.add_argument("--simplified", action="store_true", help="use the upwind-axis model")
    p.add_argument("--scale", type=float, default=1.0, help="simplified-model scale")
    p.set_defaults(func=cmd_disperse)

    p = sub.add_parser("synth", help="write a synthetic sensor network")
    _add_common(p, data=False)
    p.add_argument("--kind", choices=("planted", "field"), default="planted")
    p.add_argument("--n-stations", type=int, default=40)
    p.add_argument("--days", type=int, default=61)
    p.add_argument("--steps", type=int, default=120, help="timesteps for --kind field")
    p.add_argument("--start", type=int, default=1546300800, help="epoch seconds, --kind field")
    p.add_argument("--variogram", choices=vg.FAMILIES, default="exponential")
    p.add_argument("--sill", type=float, default=0.5)
    p.add_argument("--range", type=float, default=8000.0)
    p.add_argument("--nugget", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--mean", type=float, default=4.0, help="log-scale mean")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aqkrige: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"aqkrige: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
