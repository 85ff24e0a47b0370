"""Online decisions for a waiting package when a taxi request shows up."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .model import (
    JobStatus,
    PackageJob,
    RelayLeg,
    TaxiOrderingRequest,
    TransportNetwork,
)
from .network import NetworkBuildConfig, ReferencePathTable
from .prob import max_prob


# probabilities from different convolution orders can differ in the last
# bits; ties within this tolerance go to hitchhiking now
PROB_TOL = 1e-12


class Policy(str, Enum):
    MAX_PROB = "maxProb"
    FCFS = "FCFS"
    DES_CLOSER = "DesCloser"
    DIRECT = "Direct"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        for p in cls:
            if p.value.lower() == name.lower():
                return p
        raise ValueError(f"unknown policy {name!r}; choose from {[p.value for p in cls]}")


class Action(str, Enum):
    DISPATCH = "dispatch"
    WAIT = "wait"
    FAIL = "fail"


@dataclass(frozen=True)
class Decision:
    action: Action
    p_current: float = 0.0
    p_future: float = 0.0
    latency_us: float = 0.0
    taxi_id: str | None = None
    next_station: int | None = None


@dataclass(frozen=True)
class TorMatch:
    """Stations a request can serve: origins within delta of its pickup,
    and candidate drop-off stations within delta of its destination ordered
    by (distance, id)."""

    origin_stations: frozenset[int]
    dest_candidates: tuple[int, ...]


def match_tor(tor: TaxiOrderingRequest, net: TransportNetwork,
              cfg: NetworkBuildConfig) -> TorMatch:
    lat = np.array([tor.origin.lat, tor.destination.lat])
    lon = np.array([tor.origin.lon, tor.destination.lon])
    d = _kernels.haversine_matrix(lat, lon, net.station_lat, net.station_lon)
    return match_from_distances(d[0], d[1], cfg.match_radius)


def match_from_distances(d_origin: np.ndarray, d_dest: np.ndarray, radius: float) -> TorMatch:
    origins = frozenset(np.nonzero(d_origin <= radius)[0].tolist())
    near = np.nonzero(d_dest <= radius)[0]
    ordered = sorted(near.tolist(), key=lambda s: (d_dest[s], s))
    return TorMatch(origins, tuple(ordered))


def exploitable(tor: TaxiOrderingRequest, job: PackageJob, net: TransportNetwork,
                cfg: NetworkBuildConfig, match: TorMatch | None = None) -> int | None:
    """Next station the request can carry the package to, or None."""
    if not tor.request_time > job.arrival_time_at_current:
        return None
    match = match or match_tor(tor, net, cfg)
    if job.current_station not in match.origin_stations:
        return None
    for s in match.dest_candidates:
        if s != job.current_station:
            return s
    return None


def remaining_budget(job: PackageJob, now: float) -> float:
    return job.request.due - now


def _optimistic_bound(net, refs, slot, o, j, dest, budget, wait) -> float:
    arr = net.slot_arrays(slot)
    if not arr.exists[o, j]:
        return 0.0
    tmin = refs.t_min(j, dest, slot) if j != dest else 0.0
    limit = _kernels.budget_bins(budget - wait - tmin, net.tau)
    if limit < 0:
        return 0.0
    return float(arr.pmf[o, j, : limit + 1].sum())


def decide_maxprob(job: PackageJob, tor: TaxiOrderingRequest, s_k: int,
                   net: TransportNetwork, refs: ReferencePathTable,
                   slot: int | None = None) -> Decision:
    """Hitchhike now versus wait for a better future ride.

    ``p_current`` is the best on-time probability over paths whose first leg
    is this ride (no waiting); ``p_future`` is the best over the other
    neighbours, each charged its mean waiting time up front.
    """
    t0 = time.perf_counter_ns()
    o, d = job.current_station, job.request.destination
    now = tor.request_time
    slot = job_slot(job, net) if slot is None else slot
    budget = remaining_budget(job, now)

    if budget < 0:
        return _stamp(Decision(Action.FAIL), t0)
    p_cur = max_prob(o, d, budget, slot, net, refs, first_hop=s_k).probability
    # one search over every other first leg is the max over neighbours
    p_fut = max_prob(o, d, budget, slot, net, refs, skip_hop=s_k,
                     include_first_wait=True).probability
    if p_cur == 0.0 and p_fut == 0.0:
        wait = net.slot_arrays(slot).wait
        options = [(s_k, 0.0)] + [(j, wait[o, j]) for j in net.neighbors(o, slot) if j != s_k]
        if all(_optimistic_bound(net, refs, slot, o, j, d, budget, w) == 0.0
               for j, w in options):
            return _stamp(Decision(Action.FAIL, p_cur, p_fut), t0)
    if p_cur >= p_fut - PROB_TOL:
        return _stamp(Decision(Action.DISPATCH, p_cur, p_fut, taxi_id=tor.taxi_id,
                               next_station=s_k), t0)
    return _stamp(Decision(Action.WAIT, p_cur, p_fut), t0)


def _stamp(dec: Decision, t0: int) -> Decision:
    return dataclasses.replace(dec, latency_us=(time.perf_counter_ns() - t0) / 1000.0)


def job_slot(job: PackageJob, net: TransportNetwork) -> int:
    """Packages keep the slot of their birth time for the whole delivery."""
    return net.slot_of(job.request.birth_time)


def decide_baseline(policy: Policy, job: PackageJob, tor: TaxiOrderingRequest, s_k: int,
                    net: TransportNetwork) -> Decision:
    t0 = time.perf_counter_ns()
    d = job.request.destination
    if policy is Policy.FCFS:
        go = True
    elif policy is Policy.DES_CLOSER:
        dist = _kernels.haversine_matrix(net.station_lat[[s_k, job.current_station]],
                                         net.station_lon[[s_k, job.current_station]],
                                         net.station_lat[[d]], net.station_lon[[d]])
        go = dist[0, 0] < dist[1, 0]
    elif policy is Policy.DIRECT:
        go = s_k == d
    else:
        raise ValueError(f"{policy} is not a baseline")
    if go:
        return _stamp(Decision(Action.DISPATCH, taxi_id=tor.taxi_id, next_station=s_k), t0)
    return _stamp(Decision(Action.WAIT), t0)


def decide(policy: Policy, job: PackageJob, tor: TaxiOrderingRequest, s_k: int,
           net: TransportNetwork, refs: ReferencePathTable) -> Decision:
    if policy is Policy.MAX_PROB:
        return decide_maxprob(job, tor, s_k, net, refs)
    return decide_baseline(policy, job, tor, s_k, net)


def apply_dispatch(job: PackageJob, tor: TaxiOrderingRequest, s_k: int,
                   overhead: float = 0.0) -> PackageJob:
    """Package state once the hitchhiked leg completes."""
    arrive = tor.request_time + tor.realized_travel_time + overhead
    leg = RelayLeg(tor.taxi_id, job.current_station, s_k, tor.request_time, arrive)
    elapsed = arrive - job.request.birth_time
    if elapsed > job.request.deadline:
        status = JobStatus.FAILED
    elif s_k == job.request.destination:
        status = JobStatus.DELIVERED
    else:
        status = JobStatus.WAITING
    return dataclasses.replace(job, current_station=s_k, arrival_time_at_current=arrive,
                               relay_log=job.relay_log + (leg,), status=status)
