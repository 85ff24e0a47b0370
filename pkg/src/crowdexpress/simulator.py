"""Deterministic replay of taxi requests against package jobs."""
from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .model import (
    CrowdExpressError,
    JobStatus,
    PackageJob,
    PackageRequest,
    Popularity,
    TaxiOrderingRequest,
    TrajectoryRecord,
    TransportNetwork,
    deadline,
)
from .network import NetworkBuildConfig, ReferencePathTable, build_network
from .scheduler import (
    Action,
    Policy,
    TorMatch,
    apply_dispatch,
    decide,
    exploitable,
    job_slot,
    match_from_distances,
)

log = logging.getLogger(__name__)

OD_SAMPLING = ("uniform", "popularity", "p2p", "p2u-u2p", "u2u")
LEDGER_FIELDS = ("package_id", "policy", "origin", "dest", "birth", "deadline",
                 "status", "relays", "elapsed_s")


class EmptyStream(CrowdExpressError):
    pass


class WorkloadOutsideSpan(CrowdExpressError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    n_packages: int
    birth_window: tuple[float, float]
    od_sampling: str = "uniform"
    extra_time: float = 3600.0
    seed: int = 0

    def __post_init__(self):
        if self.n_packages <= 0:
            raise ValueError("n_packages must be positive")
        if self.birth_window[1] < self.birth_window[0]:
            raise ValueError("birth window ends before it starts")
        if self.od_sampling not in OD_SAMPLING:
            raise ValueError(f"od_sampling must be one of {OD_SAMPLING}")
        if self.extra_time < 0:
            raise ValueError("extra_time must be non-negative")


@dataclass
class PackageOutcome:
    package_id: int
    request: PackageRequest
    status: JobStatus
    relay_log: tuple
    finished: float  # epoch second of delivery or failure

    @property
    def relays(self) -> int:
        return len(self.relay_log)

    @property
    def elapsed(self) -> float:
        return self.finished - self.request.birth_time


@dataclass
class SimulationReport:
    policy: str
    n_packages: int
    delivered: int
    failed: int
    waiting_at_end: int
    success_rate: float
    mean_relays: float
    throughput_per_day: float
    utilization_ratio: float
    mean_decision_latency_us: float
    n_decisions: int
    trips_total: int
    trips_used: int
    span_days: float
    packages: list[PackageOutcome] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "policy", "n_packages", "delivered", "failed", "waiting_at_end", "success_rate",
            "mean_relays", "throughput_per_day", "utilization_ratio",
            "mean_decision_latency_us", "n_decisions", "trips_total", "trips_used", "span_days")}
        out.update(self.extra)
        return out

    def ledger_rows(self) -> list[dict]:
        return [{
            "package_id": o.package_id, "policy": self.policy,
            "origin": o.request.origin, "dest": o.request.destination,
            "birth": f"{o.request.birth_time:.0f}", "deadline": f"{o.request.deadline:.3f}",
            "status": o.status.value, "relays": o.relays, "elapsed_s": f"{o.elapsed:.3f}",
        } for o in self.packages]

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=LEDGER_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.ledger_rows())
        return buf.getvalue()

    def legs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["package_id", "leg", "taxi_id", "from", "to", "depart", "arrive"])
        for o in self.packages:
            for k, leg in enumerate(o.relay_log):
                w.writerow([o.package_id, k, leg.taxi_id, leg.src, leg.dst,
                            f"{leg.depart:.0f}", f"{leg.arrive:.0f}"])
        return buf.getvalue()


# --------------------------------------------------------------------------
# workload generation
# --------------------------------------------------------------------------


def _od_candidates(net: TransportNetwork, how: str) -> list[tuple[int, int]]:
    n = len(net)
    pop = [s.popularity_class is Popularity.POPULAR for s in net.stations]
    pairs = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if how == "p2p" and not (pop[i] and pop[j]):
                continue
            if how == "p2u-u2p" and pop[i] == pop[j]:
                continue
            if how == "u2u" and (pop[i] or pop[j]):
                continue
            pairs.append((i, j))
    return pairs


def generate_packages(workload: WorkloadSpec, net: TransportNetwork,
                      refs: ReferencePathTable, max_tries: int = 1000) -> list[PackageRequest]:
    """Random births in the window and random reachable OD pairs.

    Deadlines are the mean reference-path cost plus the extra time.
    """
    rng = np.random.default_rng(workload.seed)
    pairs = _od_candidates(net, workload.od_sampling)
    if not pairs:
        raise ValueError(f"no station pairs for sampling mode {workload.od_sampling!r}")
    if workload.od_sampling == "popularity":
        w = np.array([net.stations[i].popularity * net.stations[j].popularity
                      for i, j in pairs], dtype=np.float64) + 1e-12
        weights = w / w.sum()
    else:
        weights = None
    a, b = workload.birth_window
    out = []
    for _ in range(workload.n_packages):
        for _ in range(max_tries):
            birth = float(np.floor(rng.uniform(a, b))) if b > a else float(a)
            i, j = pairs[int(rng.choice(len(pairs), p=weights))]
            t_avg = refs.t_avg(i, j, net.slot_of(birth))
            if math.isfinite(t_avg):
                out.append(PackageRequest(i, j, birth, workload.extra_time,
                                          deadline(t_avg, workload.extra_time)))
                break
        else:
            raise ValueError("could not sample a reachable OD pair; network too sparse")
    return out


# --------------------------------------------------------------------------
# replay
# --------------------------------------------------------------------------


def _tor_distances(tors: Sequence[TaxiOrderingRequest], net: TransportNetwork, chunk=50_000):
    n = len(tors)
    d_o = np.empty((n, len(net)))
    d_d = np.empty((n, len(net)))
    for lo in range(0, n, chunk):
        part = tors[lo:lo + chunk]
        d_o[lo:lo + len(part)] = _kernels.haversine_matrix(
            np.array([t.origin.lat for t in part]), np.array([t.origin.lon for t in part]),
            net.station_lat, net.station_lon)
        d_d[lo:lo + len(part)] = _kernels.haversine_matrix(
            np.array([t.destination.lat for t in part]), np.array([t.destination.lon for t in part]),
            net.station_lat, net.station_lon)
    return d_o, d_d


def replay(trajectories: Sequence[TrajectoryRecord | TaxiOrderingRequest],
           workload: WorkloadSpec, policy: Policy | str, net: TransportNetwork,
           refs: ReferencePathTable, cfg: NetworkBuildConfig | None = None,
           overhead: float = 0.0, requests: Sequence[PackageRequest] | None = None
           ) -> SimulationReport:
    """Stream taxi requests in pickup-time order against the package jobs.

    Each request is offered to the waiting packages near its pickup point in
    order of least slack; the first package whose policy dispatches takes it.
    ``requests`` overrides workload sampling (the workload still sets policy
    metadata and must lie inside the stream).
    """
    policy = Policy.parse(policy) if isinstance(policy, str) else policy
    if cfg is None:
        cfg = NetworkBuildConfig.from_dict(net.build_config)
    if not trajectories:
        raise EmptyStream("no taxi requests to replay")
    tors = [t if isinstance(t, TaxiOrderingRequest) else TaxiOrderingRequest.from_record(t)
            for t in trajectories]
    tors.sort(key=lambda t: (t.request_time, t.taxi_id))
    first, last = tors[0].request_time, tors[-1].request_time
    a, b = workload.birth_window
    if a < first or b > last:
        raise WorkloadOutsideSpan(
            f"birth window [{a:.0f}, {b:.0f}] outside stream span [{first:.0f}, {last:.0f}]")
    if requests is None:
        requests = generate_packages(workload, net, refs)

    n_pkg = len(requests)
    jobs = [PackageJob.new(r) for r in requests]
    finished = [math.nan] * n_pkg
    births = sorted(range(n_pkg), key=lambda k: (requests[k].birth_time, k))
    next_birth = 0
    waiting: dict[int, set[int]] = {s: set() for s in range(len(net))}
    in_transit: list[tuple[float, int]] = []
    busy_until: dict[str, float] = {}
    trips_used = 0
    latencies: list[float] = []
    slots = [job_slot(j, net) for j in jobs]
    d_o, d_d = _tor_distances(tors, net)
    radius = cfg.match_radius

    def finish(k: int, status: JobStatus, when: float):
        jobs[k] = dataclasses.replace(jobs[k], status=status)
        finished[k] = when
        waiting[jobs[k].current_station].discard(k)

    for idx, tor in enumerate(tors):
        now = tor.request_time
        while next_birth < n_pkg and requests[births[next_birth]].birth_time < now:
            k = births[next_birth]
            waiting[jobs[k].current_station].add(k)
            next_birth += 1
        while in_transit and in_transit[0][0] < now:
            _, k = heapq.heappop(in_transit)
            if jobs[k].status is JobStatus.WAITING:
                waiting[jobs[k].current_station].add(k)
        if busy_until.get(tor.taxi_id, -math.inf) > now:
            continue
        match = match_from_distances(d_o[idx], d_d[idx], radius)
        if not match.dest_candidates or not match.origin_stations:
            continue
        cands = []
        for s in sorted(match.origin_stations):
            for k in sorted(waiting[s]):
                job = jobs[k]
                if job.request.due < now:
                    finish(k, JobStatus.FAILED, job.request.due)
                    continue
                slack = job.request.due - now - refs.t_min(s, job.request.destination, slots[k])
                cands.append((slack, k))
        cands.sort()
        for _, k in cands:
            job = jobs[k]
            s_k = exploitable(tor, job, net, cfg, match)
            if s_k is None:
                continue
            dec = decide(policy, job, tor, s_k, net, refs)
            latencies.append(dec.latency_us)
            if dec.action is Action.FAIL:
                finish(k, JobStatus.FAILED, now)
            elif dec.action is Action.DISPATCH:
                new = apply_dispatch(job, tor, s_k, overhead)
                waiting[job.current_station].discard(k)
                jobs[k] = new
                trips_used += 1
                busy_until[tor.taxi_id] = new.arrival_time_at_current
                if new.status is JobStatus.WAITING:
                    heapq.heappush(in_transit, (new.arrival_time_at_current, k))
                else:
                    finished[k] = new.arrival_time_at_current
                break

    # unresolved packages at the end of the stream count as failures
    for k, job in enumerate(jobs):
        if job.status is JobStatus.WAITING:
            jobs[k] = dataclasses.replace(job, status=JobStatus.FAILED)
            finished[k] = min(job.request.due, max(last, job.arrival_time_at_current))

    outcomes = [PackageOutcome(k, requests[k], jobs[k].status, jobs[k].relay_log, finished[k])
                for k in range(n_pkg)]
    delivered = [o for o in outcomes if o.status is JobStatus.DELIVERED]
    failed = sum(o.status is JobStatus.FAILED for o in outcomes)
    span_days = (last - first) / 86_400.0 if last > first else 1.0
    return SimulationReport(
        policy=policy.value,
        n_packages=n_pkg,
        delivered=len(delivered),
        failed=failed,
        waiting_at_end=n_pkg - len(delivered) - failed,
        success_rate=len(delivered) / n_pkg if n_pkg else 0.0,
        mean_relays=float(np.mean([o.relays for o in delivered])) if delivered else 0.0,
        throughput_per_day=len(delivered) / span_days,
        utilization_ratio=trips_used / len(tors),
        mean_decision_latency_us=float(np.mean(latencies)) if latencies else 0.0,
        n_decisions=len(latencies),
        trips_total=len(tors),
        trips_used=trips_used,
        span_days=span_days,
        packages=outcomes,
    )


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

SWEEP_DIMENSIONS = ("extraT", "birth_hour", "category", "n_packages", "station_density")


def sweep(dimension: str, values: Sequence, base: WorkloadSpec, policy: Policy | str,
          net: TransportNetwork, refs: ReferencePathTable,
          trajectories: Sequence[TrajectoryRecord], *,
          training: Sequence[TrajectoryRecord] | None = None,
          cfg: NetworkBuildConfig | None = None) -> list[SimulationReport]:
    """One replay per value; only the swept dimension changes between runs.

    ``birth_hour`` values are hours of the stream's first day; births fall in
    ``[hour, hour + 1)``.  ``station_density`` values are station counts: the
    network is rebuilt from ``training`` on the most popular stations, so the
    station sets are nested.
    """
    if dimension not in SWEEP_DIMENSIONS:
        raise ValueError(f"unknown sweep dimension {dimension!r}")
    if not values:
        raise ValueError("no sweep values")
    cfg = cfg or NetworkBuildConfig.from_dict(net.build_config)
    reports = []
    for v in values:
        wl, n, r = base, net, refs
        if dimension == "extraT":
            wl = dataclasses.replace(base, extra_time=float(v))
        elif dimension == "n_packages":
            wl = dataclasses.replace(base, n_packages=int(v))
        elif dimension == "category":
            wl = dataclasses.replace(base, od_sampling=str(v))
        elif dimension == "birth_hour":
            first = min(t.start_time for t in trajectories)
            day0 = first - (first + net.slot_scheme.utc_offset) % 86_400
            start = day0 + float(v) * 3600.0
            wl = dataclasses.replace(base, birth_window=(start, start + 3599.0))
        elif dimension == "station_density":
            if training is None:
                raise ValueError("station_density sweep needs training trajectories")
            keep = sorted(net.stations, key=lambda s: (-s.popularity, s.id))[: int(v)]
            keep = sorted(keep, key=lambda s: s.id)
            n = build_network(training, cfg, net.slot_scheme, stations=keep,
                              calendar=net.calendar)
            r = ReferencePathTable(n)
        rep = replay(trajectories, wl, policy, n, r, cfg)
        rep.extra = {"sweep_dimension": dimension, "sweep_value": v}
        reports.append(rep)
    return reports


def write_run(report: SimulationReport, out_dir, config_text: str | None = None):
    """Ledger CSV, relay legs CSV and summary JSON for one run."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ledger.csv").write_text(report.ledger_csv())
    (out / "legs.csv").write_text(report.legs_csv())
    (out / "summary.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    if config_text is not None:
        (out / "config.toml").write_text(config_text)
    return out
