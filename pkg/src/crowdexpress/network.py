"""Offline network building from historical taxi trips.

Pipeline: DBSCAN station identification -> passenger-flow extraction with
radius matching -> per-slot edge estimation (ceiling-discretized travel-time
pmf, waiting time) -> min/max reference paths.
"""
from __future__ import annotations

import datetime as _dt
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from sklearn.cluster import DBSCAN

from . import _kernels
from .model import (
    CrowdExpressError,
    Edge,
    EdgeSlot,
    GeoPoint,
    Popularity,
    Station,
    TimeSlotScheme,
    TrajectoryRecord,
    TransportNetwork,
    TravelTimePMF,
    is_workday,
    slot_of,
)

log = logging.getLogger(__name__)


class EmptyInput(CrowdExpressError):
    pass


class NoClusters(CrowdExpressError):
    pass


@dataclass(frozen=True)
class NetworkBuildConfig:
    dbscan_eps: float = 300.0       # meters
    dbscan_min_pts: int = 50
    delta: float = 500.0            # matching radius, meters of driving distance
    tau: float = 300.0              # bin width, seconds
    min_flow: int = 5               # trips per slot over the training window
    circuity: float = 1.3           # driving distance / great-circle distance
    popular_fraction: float = 0.55  # share of stations labelled popular

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if self.popular_fraction > 1:
            raise ValueError("popular_fraction must be <= 1")

    @property
    def match_radius(self) -> float:
        """Great-circle radius equivalent to ``delta`` driving meters."""
        return self.delta / self.circuity

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "NetworkBuildConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _records_arrays(records: Sequence[TrajectoryRecord]):
    olat = np.array([r.origin.lat for r in records])
    olon = np.array([r.origin.lon for r in records])
    dlat = np.array([r.destination.lat for r in records])
    dlon = np.array([r.destination.lon for r in records])
    return olat, olon, dlat, dlon


def _grid_cells(lat, lon, size_m):
    """Occupied cells of a local equirectangular grid: centres, point->cell map, counts."""
    m_per_deg = math.pi * _kernels.EARTH_RADIUS_M / 180.0
    lon_scale = math.cos(math.radians(float(np.median(lat))))
    iy = np.floor(lat * m_per_deg / size_m).astype(np.int64)
    ix = np.floor(lon * m_per_deg * lon_scale / size_m).astype(np.int64)
    keys, inverse, counts = np.unique(np.column_stack([iy, ix]), axis=0,
                                      return_inverse=True, return_counts=True)
    centres = np.column_stack([(keys[:, 0] + 0.5) * size_m / m_per_deg,
                               (keys[:, 1] + 0.5) * size_m / (m_per_deg * lon_scale)])
    return centres, inverse.reshape(-1), counts


def identify_stations(records: Sequence[TrajectoryRecord],
                      cfg: NetworkBuildConfig = NetworkBuildConfig()) -> list[Station]:
    """Cluster all pickup and drop-off points; one station per cluster centroid.

    Points are first snapped to square cells a tenth of ``dbscan_eps`` wide and
    DBSCAN runs on the occupied cells weighted by their point counts, which
    keeps memory bounded when hotspots hold hundreds of thousands of points.
    Centroids are taken over the raw points.
    """
    if not records:
        raise EmptyInput("no trajectory records")
    olat, olon, dlat, dlon = _records_arrays(records)
    lat = np.concatenate([olat, dlat])
    lon = np.concatenate([olon, dlon])
    cells, inverse, weight = _grid_cells(lat, lon, cfg.dbscan_eps / 10.0)
    cell_labels = DBSCAN(eps=cfg.dbscan_eps / _kernels.EARTH_RADIUS_M,
                         min_samples=cfg.dbscan_min_pts, metric="haversine",
                         algorithm="ball_tree").fit(np.radians(cells), sample_weight=weight).labels_
    labels = cell_labels[inverse]
    cluster_ids = sorted(set(labels.tolist()) - {-1})
    if not cluster_ids:
        raise NoClusters("every point was classified as noise")

    raw = []
    for c in cluster_ids:
        mask = labels == c
        k = int(mask.sum())
        # fsum keeps centroids independent of record order
        raw.append((math.fsum(lat[mask]) / k, math.fsum(lon[mask]) / k, k))
    # deterministic ids: by popularity desc, then position
    raw.sort(key=lambda r: (-r[2], r[0], r[1]))
    n_popular = math.ceil(cfg.popular_fraction * len(raw))
    stations = []
    for i, (la, lo, count) in enumerate(raw):
        cls = Popularity.POPULAR if i < n_popular else Popularity.UNPOPULAR
        stations.append(Station(i, GeoPoint(la, lo), count, cls))
    log.info("identified %d stations (%d popular)", len(stations), n_popular)
    return stations


@dataclass
class Flows:
    """Matched hitchhiking rides, one row per (record, station pair)."""

    src: np.ndarray
    dst: np.ndarray
    slot: np.ndarray
    duration: np.ndarray
    record: np.ndarray
    # number of training days per day type, used to average counts per day
    workdays: int
    restdays: int

    def counts(self) -> dict[tuple[int, int, int], int]:
        out: dict[tuple[int, int, int], int] = defaultdict(int)
        for i, j, s in zip(self.src.tolist(), self.dst.tolist(), self.slot.tolist()):
            out[(i, j, s)] += 1
        return dict(out)


def count_training_days(records: Sequence[TrajectoryRecord], scheme: TimeSlotScheme,
                        calendar: Callable[[_dt.date], bool] = is_workday) -> tuple[int, int]:
    """Workdays and rest days spanned by the records (inclusive date range)."""
    if not records:
        return 0, 0
    first = scheme.local_date(min(r.start_time for r in records))
    last = scheme.local_date(max(r.start_time for r in records))
    work = rest = 0
    d = first
    while d <= last:
        if calendar(d):
            work += 1
        else:
            rest += 1
        d += _dt.timedelta(days=1)
    return work, rest


def match_matrix(lat, lon, stations: Sequence[Station], radius: float) -> np.ndarray:
    """Boolean (points x stations) matrix of great-circle distance <= radius."""
    slat = np.array([s.location.lat for s in stations])
    slon = np.array([s.location.lon for s in stations])
    return _kernels.haversine_matrix(lat, lon, slat, slon) <= radius


def extract_flows(records: Sequence[TrajectoryRecord], stations: Sequence[Station],
                  cfg: NetworkBuildConfig = NetworkBuildConfig(),
                  scheme: TimeSlotScheme | None = None,
                  calendar: Callable[[_dt.date], bool] = is_workday,
                  chunk: int = 20_000) -> Flows:
    """A record yields one row for every station pair (i, j), i != j, with its
    origin within delta of station i and destination within delta of station j."""
    if not stations:
        raise EmptyInput("no stations")
    scheme = scheme or TimeSlotScheme()
    src, dst, slot, dur, rec = [], [], [], [], []
    radius = cfg.match_radius
    for lo in range(0, len(records), chunk):
        part = records[lo:lo + chunk]
        olat, olon, dlat, dlon = _records_arrays(part)
        om = match_matrix(olat, olon, stations, radius)
        dm = match_matrix(dlat, dlon, stations, radius)
        rows = np.nonzero(om.any(axis=1) & dm.any(axis=1))[0]
        for r in rows.tolist():
            starts = np.nonzero(om[r])[0]
            ends = np.nonzero(dm[r])[0]
            s = slot_of(part[r].start_time, scheme, calendar)
            for i in starts.tolist():
                for j in ends.tolist():
                    if i == j:
                        continue
                    src.append(i)
                    dst.append(j)
                    slot.append(s)
                    dur.append(part[r].travel_time)
                    rec.append(lo + r)
    work, rest = count_training_days(records, scheme, calendar)
    log.info("extracted %d station-pair rides from %d records", len(src), len(records))
    return Flows(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                 np.array(slot, dtype=np.int64), np.array(dur, dtype=np.float64),
                 np.array(rec, dtype=np.int64), work, rest)


def estimate_edges(flows: Flows, cfg: NetworkBuildConfig = NetworkBuildConfig(),
                   scheme: TimeSlotScheme | None = None) -> list[Edge]:
    """Materialize edges with at least ``min_flow`` rides in a slot.

    Waiting time is slot length over the mean number of rides per day in
    that slot.
    """
    scheme = scheme or TimeSlotScheme()
    groups: dict[tuple[int, int], dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for i, j, s, d in zip(flows.src.tolist(), flows.dst.tolist(),
                          flows.slot.tolist(), flows.duration.tolist()):
        groups[(i, j)][s].append(d)
    edges = []
    for (i, j) in sorted(groups):
        per_slot = {}
        for s in sorted(groups[(i, j)]):
            times = groups[(i, j)][s]
            if len(times) < cfg.min_flow:
                continue
            days = flows.workdays if scheme.is_workday_slot(s) else flows.restdays
            mean_daily = len(times) / max(days, 1)
            per_slot[s] = EdgeSlot(
                pmf=TravelTimePMF.from_samples(times, cfg.tau),
                waiting_time=scheme.slot_length(s) / mean_daily,
                flow=mean_daily,
                min_drive=float(min(times)),
                max_drive=float(max(times)),
            )
        if per_slot:
            edges.append(Edge(i, j, per_slot))
    return edges


def build_network(records: Sequence[TrajectoryRecord],
                  cfg: NetworkBuildConfig = NetworkBuildConfig(),
                  scheme: TimeSlotScheme | None = None,
                  stations: Sequence[Station] | None = None,
                  calendar: Callable[[_dt.date], bool] = is_workday) -> TransportNetwork:
    """Full offline pipeline.  Pass ``stations`` to skip clustering."""
    scheme = scheme or TimeSlotScheme()
    if stations is None:
        stations = identify_stations(records, cfg)
    else:
        stations = [Station(i, s.location, s.popularity, s.popularity_class)
                    for i, s in enumerate(stations)]
    flows = extract_flows(records, stations, cfg, scheme, calendar)
    edges = estimate_edges(flows, cfg, scheme)
    log.info("materialized %d edges", len(edges))
    return TransportNetwork(stations, edges, scheme, cfg.to_dict(), calendar)


# --------------------------------------------------------------------------
# reference paths
# --------------------------------------------------------------------------


def _walk(pred: np.ndarray, i: int, j: int) -> list[int]:
    if i == j:
        return [i]
    if pred[i, j] < 0:
        return []
    path = [j]
    while path[-1] != i:
        path.append(int(pred[i, path[-1]]))
    return path[::-1]


class ReferencePathTable:
    """Per-slot all-pairs shortest paths under (wait + min drive) and
    (wait + max drive) edge weights."""

    def __init__(self, network: TransportNetwork, slots: Sequence[int] | None = None):
        self.network = network
        self._tables: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
        for s in (range(network.slot_scheme.n_slots) if slots is None else slots):
            self._compute(s)

    def _compute(self, slot: int):
        arr = self.network.slot_arrays(slot)
        n = len(self.network)
        out = []
        for drive in (arr.min_drive, arr.max_drive):
            w = np.where(arr.exists, arr.wait + drive, 0.0)
            # zero-weight edges would vanish from a sparse matrix
            w = np.where(arr.exists & (w <= 0), 1e-12, w)
            g = csr_matrix(w, shape=(n, n))
            dist, pred = dijkstra(g, directed=True, return_predecessors=True)
            out.extend([dist, pred])
        self._tables[slot] = (out[0], out[1], out[2], out[3])

    def _table(self, slot: int):
        if slot not in self._tables:
            self._compute(slot)
        return self._tables[slot]

    def t_min(self, i: int, j: int, slot: int) -> float:
        return float(self._table(slot)[0][i, j])

    def t_max(self, i: int, j: int, slot: int) -> float:
        return float(self._table(slot)[2][i, j])

    def t_min_to(self, dest: int, slot: int) -> np.ndarray:
        """Column of min-time costs from every station to ``dest``."""
        return self._table(slot)[0][:, dest]

    def path_min(self, i: int, j: int, slot: int) -> list[int]:
        return _walk(self._table(slot)[1], i, j)

    def path_max(self, i: int, j: int, slot: int) -> list[int]:
        return _walk(self._table(slot)[3], i, j)

    def t_avg(self, i: int, j: int, slot: int) -> float:
        """Mean cost of the two reference paths (inf when unreachable)."""
        return 0.5 * (self.t_min(i, j, slot) + self.t_max(i, j, slot))


def reference_paths(network: TransportNetwork) -> ReferencePathTable:
    return ReferencePathTable(network)
