"""Arriving-on-time probabilities over a transport network.

Travel time along a path is the sum of independent ceiling-discretized leg
times plus deterministic waiting times; probabilities are computed by exact
integer convolution over bin indices.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .model import CrowdExpressError, TransportNetwork
from .network import ReferencePathTable

ORACLE_MAX_STATIONS = 12
# probabilities within this distance of 1 count as certain
CERTAIN = 1.0 - 1e-12


class MissingEdge(CrowdExpressError):
    pass


class TooLarge(CrowdExpressError):
    pass


@dataclass(frozen=True)
class PathProbQuery:
    path: tuple[int, ...]
    budget: float
    slot: int
    include_first_wait: bool = False

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(int(s) for s in self.path))
        if len(self.path) < 2:
            raise ValueError("a path needs at least two stations")
        if len(set(self.path)) != len(self.path):
            raise ValueError("path must be simple")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")


@dataclass
class MaxProbResult:
    probability: float
    best_path: list[int] = field(default_factory=list)
    nodes_expanded: int = 0
    trimmed: int = 0

    def to_dict(self) -> dict:
        return {"probability": self.probability, "path": self.best_path,
                "nodes_expanded": self.nodes_expanded, "trimmed": self.trimmed}


def path_prob(q: PathProbQuery, net: TransportNetwork) -> float:
    """P(total travel time along ``q.path`` <= ``q.budget``)."""
    dist = np.ones(1)
    waited = 0.0
    for leg, (u, v) in enumerate(zip(q.path, q.path[1:])):
        es = net.edge_slot(u, v, q.slot)
        if es is None:
            raise MissingEdge(f"no edge {u}->{v} in slot {q.slot}")
        if leg > 0 or q.include_first_wait:
            waited += es.waiting_time
        dist = np.convolve(dist, es.pmf.dense())
    limit = _kernels.budget_bins(q.budget - waited, net.tau)
    if limit < 0:
        return 0.0
    return float(min(1.0, dist[: limit + 1].sum()))


def _simple(path: Sequence[int]) -> bool:
    return len(set(path)) == len(path)


def _prob_or_zero(path, budget, slot, net, first_wait) -> float:
    if len(path) < 2 or not _simple(path):
        return 0.0
    arr = net.slot_arrays(slot)
    idx = np.asarray(path, dtype=np.int64)
    if not arr.exists[idx[:-1], idx[1:]].all():
        return 0.0
    return float(_kernels.path_prob_dense(arr.pmf, arr.wait, idx, float(budget),
                                          float(net.tau), bool(first_wait)))


def max_prob(origin: int, dest: int, budget: float, slot: int, net: TransportNetwork,
             refs: ReferencePathTable, *, include_first_wait: bool = False,
             first_hop: int | None = None, skip_hop: int | None = None,
             trim: bool = True) -> MaxProbResult:
    """Maximum arriving-on-time probability over simple paths.

    The search is seeded with the probability of the min-time reference path
    and a branch is cut once even its most optimistic completion (every later
    leg at its historical minimum) cannot beat the best path found so far.
    If the max-time reference path is already certain no search is run.
    ``first_hop`` pins the first leg (hitchhiking a specific taxi);
    ``skip_hop`` rules one first leg out.
    """
    if origin == dest:
        return MaxProbResult(1.0, [origin])
    if not math.isfinite(budget):
        raise ValueError("budget must be finite")
    arr = net.slot_arrays(slot)
    tmin = refs.t_min_to(dest, slot)

    def reference(path_fn) -> list[int]:
        if first_hop is None:
            path = path_fn(origin, dest, slot)
            return [] if len(path) > 1 and path[1] == skip_hop else path
        if first_hop == skip_hop or not arr.exists[origin, first_hop]:
            return []
        tail = path_fn(first_hop, dest, slot)
        return [origin] + tail if tail else []

    ref_p, ref_path = 0.0, []
    if budget >= 0:
        if trim:
            max_path = reference(refs.path_max)
            max_p = _prob_or_zero(max_path, budget, slot, net, include_first_wait)
            if max_p >= CERTAIN:
                return MaxProbResult(max_p, max_path)
        ref_path = reference(refs.path_min) if trim else []
        ref_p = _prob_or_zero(ref_path, budget, slot, net, include_first_wait)
        if ref_p == 0.0:
            ref_path = []

    p, path, n, expanded, trimmed = _kernels.dfs_max_prob(
        arr.pmf, arr.wait, arr.indptr, arr.indices, tmin,
        origin, -1 if first_hop is None else first_hop,
        -1 if skip_hop is None else skip_hop, dest,
        float(budget), float(net.tau), include_first_wait, ref_p, trim)
    best = [int(s) for s in path[:n]] if n > 0 else ref_path
    if p <= 0.0:
        return MaxProbResult(0.0, [], int(expanded), int(trimmed))
    return MaxProbResult(float(p), best, int(expanded), int(trimmed))


def simple_paths(origin: int, dest: int, slot: int, net: TransportNetwork,
                 first_hop: int | None = None, skip_hop: int | None = None):
    """Yield every simple path origin -> dest in the slot's edge set."""
    arr = net.slot_arrays(slot)
    adj = [arr.indices[arr.indptr[i]:arr.indptr[i + 1]].tolist() for i in range(len(net))]
    stack = [(origin, [origin])]
    while stack:
        u, path = stack.pop()
        for v in adj[u]:
            if v in path:
                continue
            if len(path) == 1 and (v == skip_hop or (first_hop is not None and v != first_hop)):
                continue
            if v == dest:
                yield path + [v]
            else:
                stack.append((v, path + [v]))


def brute_force_max_prob(origin: int, dest: int, budget: float, slot: int,
                         net: TransportNetwork, *, include_first_wait: bool = False,
                         first_hop: int | None = None,
                         skip_hop: int | None = None) -> MaxProbResult:
    """Enumerate all simple paths and keep the best one.

    Ties go to the shorter path, then the lexicographically smaller one.
    """
    if len(net) > ORACLE_MAX_STATIONS:
        raise TooLarge(f"{len(net)} stations exceeds the oracle limit of {ORACLE_MAX_STATIONS}")
    if origin == dest:
        return MaxProbResult(1.0, [origin])
    best_p, best_path, count = 0.0, [], 0
    for path in simple_paths(origin, dest, slot, net, first_hop, skip_hop):
        count += 1
        p = path_prob(PathProbQuery(tuple(path), budget, slot, include_first_wait), net)
        if p <= 0.0:
            continue
        key = (len(path), path)
        if p > best_p + 1e-12 or (abs(p - best_p) <= 1e-12 and key < (len(best_path), best_path)):
            best_p, best_path = p, path
    return MaxProbResult(best_p, best_path, count, 0)


def enumerate_path_prob(pmfs: Sequence[dict[int, float]], waits: Sequence[float],
                        budget: float, tau: float) -> float:
    """Reference route for ``path_prob``: sum over every bin combination."""
    limit = budget - sum(waits)
    total = 0.0
    for combo in itertools.product(*[sorted(p.items()) for p in pmfs]):
        if sum(a for a, _ in combo) * tau <= limit + 1e-9:
            total += math.prod(p for _, p in combo)
    return total
