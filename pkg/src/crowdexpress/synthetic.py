"""Synthetic taxi-trip generator for desk-scale runs without a real corpus."""
from __future__ import annotations

import datetime as _dt
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import (
    DAY,
    GeoPoint,
    Popularity,
    Station,
    TimeSlotScheme,
    TrajectoryRecord,
    is_workday,
)

# hourly trip totals per slot id for the default scheme:
# workday morning, midday, off-peak; rest-day early, rest-day late
DEFAULT_SLOT_RATES = (4500.0, 3500.0, 1500.0, 600.0, 2250.0)


@dataclass
class TrajectoryModel:
    stations: list[Station]
    rates: np.ndarray                 # (n_slots, S, S) trips per hour
    scheme: TimeSlotScheme = field(default_factory=TimeSlotScheme)
    speed_mps: float = 6.0            # door-to-door average
    circuity: float = 1.3
    base_time: float = 120.0          # seconds spent regardless of distance
    time_sigma: float = 0.25          # lognormal spread of travel times
    jitter_m: float = 150.0           # scatter of endpoints around a station
    noise_fraction: float = 0.0       # share of trips with random endpoints
    taxi_idle: float = 300.0          # mean idle gap before a taxi is reused

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)
        n = len(self.stations)
        if self.rates.shape != (self.scheme.n_slots, n, n):
            raise ValueError(f"rates must have shape {(self.scheme.n_slots, n, n)}")
        if (self.rates < 0).any():
            raise ValueError("rates must be non-negative")

    def distance_matrix(self) -> np.ndarray:
        lat = np.array([s.location.lat for s in self.stations])
        lon = np.array([s.location.lon for s in self.stations])
        return _kernels.haversine_matrix(lat, lon, lat, lon)

    def mean_travel_time(self) -> np.ndarray:
        return self.base_time + self.distance_matrix() * self.circuity / self.speed_mps


def synthetic_city(n_stations: int = 34, seed: int = 0, *,
                   center: tuple[float, float] = (40.758, -73.9855),
                   extent_m: tuple[float, float] = (20000.0, 4000.0),
                   min_separation_m: float = 800.0,
                   trip_scale_m: float = 2500.0,
                   slot_rates=DEFAULT_SLOT_RATES,
                   popular_fraction: float = 0.55,
                   scheme: TimeSlotScheme | None = None,
                   **model_kw) -> TrajectoryModel:
    """A Manhattan-like strip of stations with a gravity demand model.

    Station weights are heavy tailed so a few hotspots dominate; trip rates
    between two stations decay exponentially with their distance, so most
    rides are short and long package trips need relays.
    """
    rng = np.random.default_rng(seed)
    scheme = scheme or TimeSlotScheme()
    lat0, lon0 = center
    m_per_deg_lat = 111_320.0
    m_per_deg_lon = 111_320.0 * math.cos(math.radians(lat0))
    pts: list[tuple[float, float]] = []
    tries = 0
    while len(pts) < n_stations:
        tries += 1
        if tries > 100_000:
            raise ValueError("cannot place stations with the requested separation")
        x = rng.uniform(-extent_m[0] / 2, extent_m[0] / 2)
        y = rng.uniform(-extent_m[1] / 2, extent_m[1] / 2)
        if all(math.hypot(x - a, y - b) >= min_separation_m for a, b in pts):
            pts.append((x, y))
    weights = rng.lognormal(0.0, 0.9, size=n_stations)
    order = np.argsort(-weights, kind="stable")
    n_popular = math.ceil(popular_fraction * n_stations)
    stations = []
    for rank, idx in enumerate(order.tolist()):
        x, y = pts[idx]
        loc = GeoPoint(lat0 + x / m_per_deg_lat, lon0 + y / m_per_deg_lon)
        cls = Popularity.POPULAR if rank < n_popular else Popularity.UNPOPULAR
        stations.append(Station(rank, loc, int(round(1000 * weights[idx])), cls))
    w = np.array([s.popularity for s in stations], dtype=np.float64)
    tmp = TrajectoryModel(stations, np.zeros((scheme.n_slots, n_stations, n_stations)), scheme)
    dist = tmp.distance_matrix()
    gravity = np.outer(w, w) * np.exp(-dist / trip_scale_m)
    np.fill_diagonal(gravity, 0.0)
    gravity /= gravity.sum()
    rates = np.stack([r * gravity for r in slot_rates])
    return TrajectoryModel(stations, rates, scheme, **model_kw)


def _slot_intervals(day_start: float, workday: bool, scheme: TimeSlotScheme):
    """(slot, start, end) pieces of one local day, in epoch seconds."""
    if workday:
        bounds, offset = scheme.workday_boundaries, 0
    else:
        bounds, offset = scheme.restday_boundaries, len(scheme.workday_boundaries)
    out = []
    for i, b in enumerate(bounds):
        nxt = bounds[i + 1] if i + 1 < len(bounds) else DAY
        out.append((offset + i, day_start + b, day_start + nxt))
    # the wrapping slot also covers [00:00, first boundary)
    if bounds[0] > 0:
        out.append((offset + len(bounds) - 1, day_start, day_start + bounds[0]))
    return out


def _scatter(rng, lat, lon, radius_m):
    r = radius_m * np.sqrt(rng.uniform(0.0, 1.0, size=lat.shape))
    theta = rng.uniform(0.0, 2 * math.pi, size=lat.shape)
    dlat = r * np.cos(theta) / 111_320.0
    dlon = r * np.sin(theta) / (111_320.0 * np.cos(np.radians(lat)))
    return lat + dlat, lon + dlon


def gen_synthetic(model: TrajectoryModel, span: tuple[float, float], seed: int,
                  calendar=is_workday) -> list[TrajectoryRecord]:
    """Poisson trips per station pair and slot over ``span`` (epoch seconds).

    Same model, span and seed always give the same stream, sorted by pickup
    time and taxi id.
    """
    start, end = span
    if end <= start:
        return []
    rng = np.random.default_rng(seed)
    scheme = model.scheme
    n = len(model.stations)
    slat = np.array([s.location.lat for s in model.stations])
    slon = np.array([s.location.lon for s in model.stations])
    mean_tt = model.mean_travel_time()

    chunks = []
    local0 = start + scheme.utc_offset
    day = _dt.datetime.fromtimestamp(local0, _dt.timezone.utc).date()
    day_start = _dt.datetime(day.year, day.month, day.day, tzinfo=_dt.timezone.utc).timestamp() - scheme.utc_offset
    while day_start < end:
        date = scheme.local_date(day_start)
        for slot, a, b in _slot_intervals(day_start, calendar(date), scheme):
            a, b = max(a, start), min(b, end)
            if b <= a:
                continue
            lam = model.rates[slot] * (b - a) / 3600.0
            counts = rng.poisson(lam)
            if counts.sum() == 0:
                continue
            flat = np.repeat(np.arange(n * n), counts.ravel())
            t = rng.uniform(a, b, size=flat.size)
            chunks.append((t, flat // n, flat % n))
        day_start += DAY

    if not chunks:
        return []
    t = np.concatenate([c[0] for c in chunks])
    oi = np.concatenate([c[1] for c in chunks])
    di = np.concatenate([c[2] for c in chunks])
    order = np.argsort(t, kind="stable")
    t, oi, di = t[order], oi[order], di[order]
    m = t.size
    olat, olon = _scatter(rng, slat[oi], slon[oi], model.jitter_m)
    dlat, dlon = _scatter(rng, slat[di], slon[di], model.jitter_m)
    if model.noise_fraction > 0:
        noisy = rng.uniform(size=m) < model.noise_fraction
        k = int(noisy.sum())
        olat[noisy] = rng.uniform(slat.min(), slat.max(), k)
        olon[noisy] = rng.uniform(slon.min(), slon.max(), k)
    tt = mean_tt[oi, di] * rng.lognormal(0.0, model.time_sigma, size=m)
    tt = np.maximum(np.round(tt), 60.0)
    t = np.round(t)

    # reuse taxis that are free again; a fresh id otherwise
    free: list[tuple[float, int]] = []
    taxi = np.empty(m, dtype=np.int64)
    idle = rng.exponential(model.taxi_idle, size=m)
    next_id = 0
    for k in range(m):
        if free and free[0][0] <= t[k]:
            _, tid = heapq.heappop(free)
        else:
            tid = next_id
            next_id += 1
        taxi[k] = tid
        heapq.heappush(free, (t[k] + tt[k] + idle[k], tid))

    out = [TrajectoryRecord(f"T{taxi[k]:06d}", GeoPoint(float(olat[k]), float(olon[k])),
                            GeoPoint(float(dlat[k]), float(dlon[k])),
                            float(t[k]), float(t[k] + tt[k]))
           for k in range(m)]
    # same order the CSV reader produces
    out.sort(key=lambda r: (r.start_time, r.taxi_id))
    return out


@dataclass(frozen=True)
class SyntheticSpec:
    """Text form ``synthetic:key=value,...`` of a generated trip stream.

    Keys: ``stations``, ``city_seed`` (layout and demand), ``seed`` (the
    stream itself), ``start`` (ISO date, local midnight), ``days`` and
    ``rate_scale``.  Two specs with the same city keys describe the same
    stations, so a network built from one can replay the other.
    """

    stations: int = 34
    city_seed: int = 1
    seed: int | None = None
    start: str = "2013-01-14"
    days: float = 1.0
    rate_scale: float = 1.0

    PREFIX = "synthetic"

    @classmethod
    def is_spec(cls, text: str) -> bool:
        return text == cls.PREFIX or text.startswith(cls.PREFIX + ":")

    @classmethod
    def parse(cls, text: str) -> "SyntheticSpec":
        if not cls.is_spec(text):
            raise ValueError(f"not a synthetic spec: {text!r}")
        body = text[len(cls.PREFIX) + 1:]
        types = {"stations": int, "city_seed": int, "seed": int, "start": str,
                 "days": float, "rate_scale": float}
        kw = {}
        for item in filter(None, (p.strip() for p in body.split(","))):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"bad synthetic spec item {item!r}; keys are {', '.join(types)}")
            kw[key] = types[key](value.strip())
        spec = cls(**kw)
        _dt.date.fromisoformat(spec.start)
        if spec.stations < 2 or spec.days <= 0 or spec.rate_scale < 0:
            raise ValueError("synthetic spec needs stations >= 2, days > 0, rate_scale >= 0")
        return spec

    def city(self, scheme: TimeSlotScheme | None = None) -> TrajectoryModel:
        rates = tuple(r * self.rate_scale for r in DEFAULT_SLOT_RATES)
        return synthetic_city(self.stations, self.city_seed, slot_rates=rates, scheme=scheme)

    def span(self, scheme: TimeSlotScheme | None = None) -> tuple[float, float]:
        scheme = scheme or TimeSlotScheme()
        d = _dt.date.fromisoformat(self.start)
        t0 = _dt.datetime(d.year, d.month, d.day, tzinfo=_dt.timezone.utc).timestamp() - scheme.utc_offset
        return t0, t0 + self.days * DAY

    def generate(self, default_seed: int = 0, scheme: TimeSlotScheme | None = None,
                 calendar=is_workday) -> list[TrajectoryRecord]:
        seed = default_seed if self.seed is None else self.seed
        return gen_synthetic(self.city(scheme), self.span(scheme), seed, calendar)
