"""Monthly and annual hotspot rules on daily PM2.5 aggregates.

A location-month is a *frequency* hotspot when more than 60% of its active
days have a daily mean above 60 ug/m3, a *scale* hotspot when the mean of
its active-day means exceeds 90, and a *consistency* hotspot when three
consecutive calendar days each have a daily mean above 90. A location-year
is an *annual* hotspot when its mean exceeds 100. All comparisons are
strict.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date, timedelta

import numpy as np

from .datamodel import RAW_UNIT, day_index
from .exceptions import DataError, UnitError

MONTHLY_KINDS = ("frequency", "scale", "consistency")
KINDS = MONTHLY_KINDS + ("annual",)
_EPOCH = date(1970, 1, 1)


@dataclass(frozen=True)
class HotspotRules:
    frequency_level: float = 60.0
    frequency_fraction: float = 0.6
    scale_level: float = 90.0
    consistency_level: float = 90.0
    consistency_days: int = 3
    annual_level: float = 100.0
    activity_min_hours: float = 12.0
    annual_min_days: int = 180

    def scaled(self, factor):
        """Scale the three monthly concentration levels; the annual one is kept."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return replace(
            self,
            frequency_level=self.frequency_level * factor,
            scale_level=self.scale_level * factor,
            consistency_level=self.consistency_level * factor,
        )


DEFAULT_RULES = HotspotRules()


@dataclass(frozen=True)
class DailyStat:
    date: date
    mean: float | None
    hours_present: float

    @property
    def active(self):
        return self.mean is not None


@dataclass(frozen=True)
class HotspotLabel:
    location_id: str
    period: str
    kind: str
    statistic: float
    threshold: float
    network: str = ""


@dataclass(frozen=True)
class MonthResult:
    period: str
    labels: tuple
    insufficient: bool = False

    @property
    def kinds(self):
        return {lab.kind for lab in self.labels}

    @property
    def is_hotspot(self):
        return bool(self.labels)


@dataclass(frozen=True)
class AnnualResult:
    period: str
    label: HotspotLabel | None
    insufficient: bool = False


def daily_stats(times, values, tz_offset_minutes=0, present=None, step=3600,
                activity_min_hours=DEFAULT_RULES.activity_min_hours):
    """Per local calendar day: mean over present readings and hours covered.

    A day is active (mean not None) iff its present readings cover at least
    ``activity_min_hours`` hours. Every day touched by ``times`` is listed.
    """
    times = np.asarray(times, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if present is None:
        present = np.isfinite(values)
    present = np.asarray(present, dtype=bool)
    if len(times) == 0:
        return []
    days = day_index(times, tz_offset_minutes)
    first = int(days[0])
    n_days = int(days[-1]) - first + 1
    slot = days - first
    counts = np.bincount(slot[present], minlength=n_days)
    sums = np.bincount(slot[present], weights=values[present], minlength=n_days)
    hours = counts * (step / 3600.0)
    out = []
    for k in range(n_days):
        active = counts[k] > 0 and hours[k] >= activity_min_hours
        mean = float(sums[k] / counts[k]) if active else None
        out.append(DailyStat(_EPOCH + timedelta(days=first + k), mean, float(hours[k])))
    return out


def month_key(d):
    return f"{d.year:04d}-{d.month:02d}"


def classify_month(stats, location_id="", rules=DEFAULT_RULES, network=""):
    """Apply the frequency, scale and consistency rules to one month of days."""
    stats = sorted(stats, key=lambda s: s.date)
    if not stats:
        raise DataError("classify_month needs at least one day")
    period = month_key(stats[0].date)
    if any(month_key(s.date) != period for s in stats):
        raise DataError("classify_month received days from more than one month")
    active = [s for s in stats if s.active]
    if not active:
        return MonthResult(period, (), insufficient=True)

    labels = []
    means = np.array([s.mean for s in active])
    frac = float(np.mean(means > rules.frequency_level))
    if frac > rules.frequency_fraction:
        labels.append(HotspotLabel(location_id, period, "frequency", frac,
                                   rules.frequency_fraction, network))
    monthly = float(means.mean())
    if monthly > rules.scale_level:
        labels.append(HotspotLabel(location_id, period, "scale", monthly, rules.scale_level,
                                   network))

    run, prev, run_min = 0, None, np.inf
    for s in stats:
        hot = s.active and s.mean > rules.consistency_level
        if hot and prev is not None and (s.date - prev).days == 1 and run > 0:
            run += 1
            run_min = min(run_min, s.mean)
        elif hot:
            run, run_min = 1, s.mean
        else:
            run, run_min = 0, np.inf
        prev = s.date
        if run >= rules.consistency_days:
            labels.append(HotspotLabel(location_id, period, "consistency", float(run_min),
                                       rules.consistency_level, network))
            break
    return MonthResult(period, tuple(labels))


def classify_annual(stats, location_id="", rules=DEFAULT_RULES, period=None, network=""):
    """Annual-mean rule over a year of days; needs ``annual_min_days`` active days."""
    stats = list(stats)
    if period is None:
        period = f"{stats[0].date.year:04d}" if stats else ""
    active = [s.mean for s in stats if s.active]
    if len(active) < rules.annual_min_days:
        return AnnualResult(period, None, insufficient=True)
    mean = float(np.mean(active))
    label = None
    if mean > rules.annual_level:
        label = HotspotLabel(location_id, period, "annual", mean, rules.annual_level, network)
    return AnnualResult(period, label)


def year_key(d, year_mode="calendar"):
    if year_mode == "calendar":
        return f"{d.year:04d}"
    if year_mode == "study":
        start = d.year if d.month >= 7 else d.year - 1
        return f"{start:04d}-{start + 1:04d}"
    raise ValueError(f"unknown year mode {year_mode!r}")


@dataclass(frozen=True)
class LocationResult:
    location_id: str
    months: tuple
    years: tuple

    @property
    def labels(self):
        out = [lab for m in self.months for lab in m.labels]
        out += [y.label for y in self.years if y.label is not None]
        return out


def classify_series(times, values, location_id="", rules=DEFAULT_RULES, present=None,
                    tz_offset_minutes=0, step=3600, year_mode="calendar", network=""):
    stats = daily_stats(times, values, tz_offset_minutes, present, step,
                        rules.activity_min_hours)
    by_month = defaultdict(list)
    by_year = defaultdict(list)
    for s in stats:
        by_month[month_key(s.date)].append(s)
        by_year[year_key(s.date, year_mode)].append(s)
    months = tuple(classify_month(by_month[k], location_id, rules, network)
                   for k in sorted(by_month))
    years = tuple(classify_annual(by_year[k], location_id, rules, k, network)
                  for k in sorted(by_year))
    return LocationResult(location_id, months, years)


def classify_frame(frame, rules=DEFAULT_RULES, tz_offset_minutes=0, year_mode="calendar"):
    """Classify every station of a raw-unit frame."""
    if frame.unit != RAW_UNIT:
        raise UnitError(
            f"hotspot thresholds are in {RAW_UNIT}; frame unit is {frame.unit!r}"
        )
    results = []
    for k, st in enumerate(frame.stations):
        results.append(classify_series(frame.times, frame.values[:, k], st.id, rules,
                                       frame.present[:, k], tz_offset_minutes, frame.step,
                                       year_mode, st.network))
    return results


def hotspot_location_months(labels):
    """Set of (location, month) pairs flagged by any monthly rule."""
    return {(lab.location_id, lab.period) for lab in labels if lab.kind in MONTHLY_KINDS}


def count_hotspots(labels, networks=None):
    """Per-month counts of hotspot locations split into detected/hidden.

    ``detected`` counts public-network locations and ``hidden`` low-cost
    ones. A location-month counts once however many rules fire.
    """
    networks = dict(networks or {})
    table = defaultdict(lambda: {"detected": 0, "hidden": 0})
    seen = set()
    for lab in labels:
        if lab.kind not in MONTHLY_KINDS:
            continue
        key = (lab.location_id, lab.period)
        if key in seen:
            continue
        seen.add(key)
        net = networks.get(lab.location_id, lab.network)
        if net == "public":
            table[lab.period]["detected"] += 1
        elif net == "lowcost":
            table[lab.period]["hidden"] += 1
        else:
            raise DataError(f"location {lab.location_id!r} has no network tag")
    return {k: dict(v) for k, v in sorted(table.items())}


LABEL_FIELDS = ("location_id", "period", "kind", "statistic", "threshold", "network")


def write_labels(path, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_FIELDS)
        for lab in sorted(labels, key=lambda x: (x.location_id, x.period, KINDS.index(x.kind))):
            w.writerow([lab.location_id, lab.period, lab.kind, repr(lab.statistic),
                        repr(lab.threshold), lab.network])


def read_labels(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [HotspotLabel(r["location_id"], r["period"], r["kind"], float(r["statistic"]),
                             float(r["threshold"]), r["network"]) for r in reader]


def write_counts(path, counts):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", "detected", "hidden"])
        for month, c in counts.items():
            w.writerow([month, c["detected"], c["hidden"]])
