"""Domain types shared by the network builder, the probability engine,
the scheduler and the simulator."""
from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels

NETWORK_FORMAT = "crowdexpress-network"
NETWORK_VERSION = 1
DAY = 86_400


class CrowdExpressError(Exception):
    """Base class for all library errors."""


class DataError(CrowdExpressError):
    """Malformed input data (CSV rows, network documents, configs)."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"invalid coordinate ({self.lat}, {self.lon})")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2.0 * _kernels.EARTH_RADIUS_M * math.asin(math.sqrt(min(h, 1.0)))


@dataclass(frozen=True)
class TrajectoryRecord:
    taxi_id: str
    origin: GeoPoint
    destination: GeoPoint
    start_time: float
    end_time: float

    def __post_init__(self):
        if not self.end_time > self.start_time:
            raise ValueError(f"trajectory of taxi {self.taxi_id} ends before it starts")

    @property
    def travel_time(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class TaxiOrderingRequest:
    origin: GeoPoint
    destination: GeoPoint
    request_time: float
    taxi_id: str
    realized_travel_time: float

    def __post_init__(self):
        if not self.realized_travel_time > 0:
            raise ValueError("realized travel time must be positive")

    @classmethod
    def from_record(cls, rec: TrajectoryRecord) -> "TaxiOrderingRequest":
        return cls(rec.origin, rec.destination, rec.start_time, rec.taxi_id, rec.travel_time)


class Popularity(str, Enum):
    POPULAR = "popular"
    UNPOPULAR = "unpopular"


@dataclass(frozen=True)
class Station:
    id: int
    location: GeoPoint
    popularity: int = 0
    popularity_class: Popularity = Popularity.UNPOPULAR

    def __post_init__(self):
        if self.id < 0 or self.popularity < 0:
            raise ValueError("station id and popularity must be non-negative")


def is_workday(date: _dt.date) -> bool:
    return date.weekday() < 5


@dataclass(frozen=True)
class TimeSlotScheme:
    """Cyclic day partition.

    With boundaries ``b0 < b1 < ... < bn`` (seconds after local midnight) the
    slots are ``[b0, b1), ..., [bn, b0 + 24h)``; the last one wraps midnight.
    Workday slots get ids ``0 .. n_work-1``, rest-day slots follow.
    """

    workday_boundaries: tuple[float, ...] = (7 * 3600, 10 * 3600, 17 * 3600)
    restday_boundaries: tuple[float, ...] = (0, 8 * 3600)
    utc_offset: float = 0.0

    def __post_init__(self):
        for name, bounds, expected in (("workday", self.workday_boundaries, 3),
                                       ("restday", self.restday_boundaries, 2)):
            if len(bounds) != expected:
                raise ValueError(f"{name} scheme needs {expected} boundaries")
            if any(b < 0 or b >= DAY for b in bounds):
                raise ValueError(f"{name} boundaries must lie in [0, 86400)")
            if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
                raise ValueError(f"{name} boundaries must be strictly increasing")
        object.__setattr__(self, "workday_boundaries", tuple(float(b) for b in self.workday_boundaries))
        object.__setattr__(self, "restday_boundaries", tuple(float(b) for b in self.restday_boundaries))

    @property
    def n_slots(self) -> int:
        return len(self.workday_boundaries) + len(self.restday_boundaries)

    def is_workday_slot(self, slot: int) -> bool:
        return slot < len(self.workday_boundaries)

    def slot_length(self, slot: int) -> float:
        """Length of the slot in seconds (the ΔT of the waiting-time formula)."""
        if self.is_workday_slot(slot):
            bounds, i = self.workday_boundaries, slot
        else:
            bounds, i = self.restday_boundaries, slot - len(self.workday_boundaries)
        nxt = bounds[i + 1] if i + 1 < len(bounds) else bounds[0] + DAY
        return nxt - bounds[i]

    def local_date(self, t: float) -> _dt.date:
        return _dt.datetime.fromtimestamp(t + self.utc_offset, _dt.timezone.utc).date()

    def to_dict(self) -> dict:
        return {"workday_boundaries": list(self.workday_boundaries),
                "restday_boundaries": list(self.restday_boundaries),
                "utc_offset": self.utc_offset}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TimeSlotScheme":
        return cls(tuple(d["workday_boundaries"]), tuple(d["restday_boundaries"]),
                   float(d.get("utc_offset", 0.0)))


def slot_of(t: float, scheme: TimeSlotScheme,
            calendar: Callable[[_dt.date], bool] = is_workday) -> int:
    """Slot id of epoch time ``t``; intervals are half-open on the left."""
    local = t + scheme.utc_offset
    tod = local % DAY
    date = _dt.datetime.fromtimestamp(local, _dt.timezone.utc).date()
    if calendar(date):
        bounds, offset = scheme.workday_boundaries, 0
    else:
        bounds, offset = scheme.restday_boundaries, len(scheme.workday_boundaries)
    idx = len(bounds) - 1
    for i in range(len(bounds) - 1):
        if bounds[i] <= tod < bounds[i + 1]:
            idx = i
            break
    return offset + idx


@dataclass(frozen=True)
class TravelTimePMF:
    """Ceiling-discretized travel-time distribution.

    ``mass[alpha]`` is the probability that the time falls in
    ``((alpha - 1) * tau, alpha * tau]``.
    """

    tau: float
    mass: Mapping[int, float]
    sample_count: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        mass = {int(a): float(p) for a, p in sorted(self.mass.items())}
        if not mass:
            raise ValueError("empty pmf")
        for a, p in mass.items():
            if a < 1 or not (0.0 < p <= 1.0):
                raise ValueError(f"bad pmf entry {a}: {p}")
        total = sum(mass.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf sums to {total}")
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_samples(cls, times: Sequence[float], tau: float) -> "TravelTimePMF":
        times = np.asarray(times, dtype=np.float64)
        if times.size == 0:
            raise ValueError("no samples")
        alphas = discretize(times, tau)
        vals, counts = np.unique(alphas, return_counts=True)
        n = int(times.size)
        return cls(tau, {int(a): c / n for a, c in zip(vals, counts)}, n)

    @property
    def max_alpha(self) -> int:
        return max(self.mass)

    @property
    def min_alpha(self) -> int:
        return min(self.mass)

    def dense(self, length: int | None = None) -> np.ndarray:
        """Probability vector indexed by alpha (index 0 is always 0)."""
        length = self.max_alpha + 1 if length is None else length
        out = np.zeros(length)
        for a, p in self.mass.items():
            if a < length:
                out[a] = p
        return out

    def cdf(self, t: float) -> float:
        """P(discretized time <= t)."""
        limit = _kernels.budget_bins(t, self.tau)
        return min(1.0, sum(p for a, p in self.mass.items() if a <= limit))


def discretize(times, tau: float) -> np.ndarray:
    """Ceiling rule: a raw time maps to the upper bound of its bin."""
    alphas = np.ceil(np.asarray(times, dtype=np.float64) / tau).astype(np.int64)
    return np.maximum(alphas, 1)


@dataclass(frozen=True)
class EdgeSlot:
    pmf: TravelTimePMF
    waiting_time: float
    flow: float
    min_drive: float
    max_drive: float

    def __post_init__(self):
        if self.flow <= 0:
            raise ValueError("materialized edges need positive flow")
        if self.min_drive > self.max_drive:
            raise ValueError("min_drive exceeds max_drive")


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    per_slot: Mapping[int, EdgeSlot]

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("self-loop edges are not allowed")


@dataclass
class SlotArrays:
    """Dense per-slot view consumed by the search kernels."""

    slot: int
    pmf: np.ndarray       # (S, S, A) probability by alpha
    wait: np.ndarray      # (S, S) waiting time, inf where absent
    min_drive: np.ndarray
    max_drive: np.ndarray
    exists: np.ndarray    # (S, S) bool
    indptr: np.ndarray
    indices: np.ndarray
    tau: float


class TransportNetwork:
    """Stations plus directed per-slot edges; immutable after construction."""

    def __init__(self, stations: Sequence[Station], edges: Sequence[Edge],
                 slot_scheme: TimeSlotScheme | None = None,
                 build_config: Mapping | None = None,
                 calendar: Callable[[_dt.date], bool] = is_workday):
        self.stations = tuple(stations)
        for i, s in enumerate(self.stations):
            if s.id != i:
                raise ValueError("station ids must be dense and ordered")
        self.slot_scheme = slot_scheme or TimeSlotScheme()
        self.build_config = dict(build_config or {})
        self.calendar = calendar
        n = len(self.stations)
        self._edges: dict[tuple[int, int], Edge] = {}
        taus = set()
        for e in sorted(edges, key=lambda e: (e.src, e.dst)):
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ValueError(f"edge ({e.src},{e.dst}) references unknown station")
            if (e.src, e.dst) in self._edges:
                raise ValueError(f"duplicate edge ({e.src},{e.dst})")
            self._edges[(e.src, e.dst)] = e
            taus.update(es.pmf.tau for es in e.per_slot.values())
        if len(taus) > 1:
            raise ValueError("all pmfs must share one tau")
        self.tau = taus.pop() if taus else float(self.build_config.get("tau", 300.0))
        self._slot_cache: dict[int, SlotArrays] = {}
        self._lat = np.array([s.location.lat for s in self.stations])
        self._lon = np.array([s.location.lon for s in self.stations])

    def __len__(self) -> int:
        return len(self.stations)

    @property
    def edges(self) -> list[Edge]:
        return list(self._edges.values())

    @property
    def station_lat(self) -> np.ndarray:
        return self._lat

    @property
    def station_lon(self) -> np.ndarray:
        return self._lon

    def edge(self, src: int, dst: int) -> Edge | None:
        return self._edges.get((src, dst))

    def edge_slot(self, src: int, dst: int, slot: int) -> EdgeSlot | None:
        e = self._edges.get((src, dst))
        return None if e is None else e.per_slot.get(slot)

    def neighbors(self, src: int, slot: int) -> list[int]:
        arr = self.slot_arrays(slot)
        return arr.indices[arr.indptr[src]:arr.indptr[src + 1]].tolist()

    def slot_of(self, t: float) -> int:
        return slot_of(t, self.slot_scheme, self.calendar)

    def slot_arrays(self, slot: int) -> SlotArrays:
        cached = self._slot_cache.get(slot)
        if cached is not None:
            return cached
        n = len(self.stations)
        width = 2
        for e in self._edges.values():
            es = e.per_slot.get(slot)
            if es is not None:
                width = max(width, es.pmf.max_alpha + 1)
        pmf = np.zeros((n, n, width))
        wait = np.full((n, n), np.inf)
        mn = np.full((n, n), np.inf)
        mx = np.full((n, n), np.inf)
        exists = np.zeros((n, n), dtype=bool)
        for (i, j), e in self._edges.items():
            es = e.per_slot.get(slot)
            if es is None:
                continue
            pmf[i, j] = es.pmf.dense(width)
            wait[i, j] = es.waiting_time
            mn[i, j] = es.min_drive
            mx[i, j] = es.max_drive
            exists[i, j] = True
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(exists.sum(axis=1))
        indices = np.nonzero(exists)[1].astype(np.int64)
        arr = SlotArrays(slot, pmf, wait, mn, mx, exists, indptr, indices, self.tau)
        self._slot_cache[slot] = arr
        return arr

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        edges = []
        for (i, j), e in self._edges.items():
            slots = {}
            for s in sorted(e.per_slot):
                es = e.per_slot[s]
                slots[str(s)] = {
                    "pmf": {str(a): p for a, p in es.pmf.mass.items()},
                    "sample_count": es.pmf.sample_count,
                    "waiting_time": es.waiting_time,
                    "flow": es.flow,
                    "min_drive": es.min_drive,
                    "max_drive": es.max_drive,
                }
            edges.append({"from": i, "to": j, "slots": slots})
        return {
            "format": NETWORK_FORMAT,
            "version": NETWORK_VERSION,
            "tau": self.tau,
            "stations": [
                {"id": s.id, "lat": s.location.lat, "lon": s.location.lon,
                 "popularity": s.popularity, "popularity_class": s.popularity_class.value}
                for s in self.stations
            ],
            "edges": edges,
            "slot_scheme": self.slot_scheme.to_dict(),
            "build_config": self.build_config,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TransportNetwork":
        if doc.get("format") != NETWORK_FORMAT:
            raise DataError("not a crowdexpress network document")
        if doc.get("version") != NETWORK_VERSION:
            raise DataError(f"unsupported network version {doc.get('version')!r}")
        try:
            tau = float(doc["tau"])
            stations = [Station(int(s["id"]), GeoPoint(float(s["lat"]), float(s["lon"])),
                                int(s["popularity"]), Popularity(s["popularity_class"]))
                        for s in doc["stations"]]
            edges = []
            for e in doc["edges"]:
                per_slot = {}
                for s, es in e["slots"].items():
                    pmf = TravelTimePMF(tau, {int(a): float(p) for a, p in es["pmf"].items()},
                                        int(es.get("sample_count", 0)))
                    per_slot[int(s)] = EdgeSlot(pmf, float(es["waiting_time"]), float(es["flow"]),
                                                float(es["min_drive"]), float(es["max_drive"]))
                edges.append(Edge(int(e["from"]), int(e["to"]), per_slot))
            return cls(stations, edges, TimeSlotScheme.from_dict(doc["slot_scheme"]),
                       doc.get("build_config", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed network document: {exc}") from exc


@dataclass(frozen=True)
class PackageRequest:
    origin: int
    destination: int
    birth_time: float
    extra_time: float
    deadline: float  # duration in seconds, measured from birth_time

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError("package origin equals destination")
        if self.extra_time < 0 or self.deadline < 0:
            raise ValueError("negative extra time or deadline")

    @property
    def due(self) -> float:
        """Absolute epoch second by which the package must arrive."""
        return self.birth_time + self.deadline


class JobStatus(str, Enum):
    WAITING = "waiting"
    IN_TRANSIT = "in_transit"
    DELIVERED = "delivered"
    FAILED = "failed"


@dataclass(frozen=True)
class RelayLeg:
    taxi_id: str
    src: int
    dst: int
    depart: float
    arrive: float


@dataclass(frozen=True)
class PackageJob:
    request: PackageRequest
    current_station: int
    arrival_time_at_current: float
    relay_log: tuple[RelayLeg, ...] = ()
    status: JobStatus = JobStatus.WAITING

    @classmethod
    def new(cls, request: PackageRequest) -> "PackageJob":
        return cls(request, request.origin, request.birth_time)

    @property
    def relays(self) -> int:
        return len(self.relay_log)

    def remaining(self, now: float) -> float:
        return self.request.due - now


def deadline(t_avg: float, extra_time: float) -> float:
    """Relative deadline: mean reference-path cost plus the user's extra time."""
    if extra_time < 0:
        raise ValueError("extra time must be non-negative")
    return t_avg + extra_time
