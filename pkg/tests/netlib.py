"""Hand-made and randomly drawn networks shared by the test modules."""
from __future__ import annotations

import numpy as np

from crowdexpress.model import (
    Edge,
    EdgeSlot,
    GeoPoint,
    Popularity,
    Station,
    TimeSlotScheme,
    TransportNetwork,
    TravelTimePMF,
)

TAU = 300.0
SLOT = 0


def stations(n: int) -> list[Station]:
    return [Station(i, GeoPoint(40.70 + 0.01 * i, -74.00 + 0.005 * (i % 3)), 100 * (n - i),
                    Popularity.POPULAR if i < (n + 1) // 2 else Popularity.UNPOPULAR)
            for i in range(n)]


def edge_slot(mass: dict[int, float], wait: float = 0.0, tau: float = TAU) -> EdgeSlot:
    pmf = TravelTimePMF(tau, dict(mass))
    return EdgeSlot(pmf, float(wait), flow=1.0,
                    min_drive=(pmf.min_alpha - 1) * tau + 1.0, max_drive=pmf.max_alpha * tau)


def network(n: int, edges: dict[tuple[int, int], dict], waits: dict | None = None,
            slot: int = SLOT) -> TransportNetwork:
    waits = waits or {}
    es = [Edge(i, j, {slot: edge_slot(m, waits.get((i, j), 0.0))}) for (i, j), m in edges.items()]
    return TransportNetwork(stations(n), es, TimeSlotScheme(), {"tau": TAU})


# Six stations: S0 reaches S5 through S1, S2, S3, or S4 -> S3.  Bins are 5 minutes.
FIG2_EDGES = {
    (0, 1): {1: 0.3, 2: 0.7}, (1, 5): {1: 0.6, 2: 0.4},
    (0, 2): {1: 0.5, 2: 0.5}, (2, 5): {1: 0.9, 2: 0.1},
    (0, 3): {1: 0.2, 2: 0.8}, (3, 5): {1: 0.5, 2: 0.5},
    (0, 4): {1: 1.0}, (4, 3): {1: 0.5, 2: 0.5},
}


def fig2_network() -> TransportNetwork:
    return network(6, FIG2_EDGES)


def random_pmf(rng, max_bins: int = 3, max_alpha: int = 5) -> dict[int, float]:
    k = int(rng.integers(1, max_bins + 1))
    alphas = rng.choice(np.arange(1, max_alpha + 1), size=k, replace=False)
    w = rng.random(k) + 0.05
    w = w / w.sum()
    mass = {int(a): float(p) for a, p in zip(alphas, w)}
    # renormalize exactly on the last entry so the pmf validates
    last = max(mass)
    mass[last] = 1.0 - sum(p for a, p in mass.items() if a != last)
    return mass


def random_network(rng, n_max: int = 8, density: float | None = None,
                   max_bins: int = 3, wait_max: float = 600.0) -> TransportNetwork:
    n = int(rng.integers(3, n_max + 1))
    density = float(rng.uniform(0.3, 0.9)) if density is None else density
    edges, waits = {}, {}
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                edges[(i, j)] = random_pmf(rng, max_bins)
                waits[(i, j)] = float(rng.uniform(0.0, wait_max))
    return network(n, edges, waits)


def dense_fixture() -> TransportNetwork:
    """Ten stations, complete digraph; leg times grow with index distance so
    direct legs are fast and detours are slow."""
    rng = np.random.default_rng(2024)
    n = 10
    edges, waits = {}, {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            base = 1 + abs(i - j) // 2
            spread = {base: 0.6, base + 1: 0.3, base + 2: 0.1}
            edges[(i, j)] = spread
            waits[(i, j)] = float(rng.uniform(60.0, 300.0))
    return network(n, edges, waits)


# --------------------------------------------------------------------------
# desk-scale synthetic city (34 stations on a 20 km x 4 km strip)
# --------------------------------------------------------------------------

DESK_START = 1357516800.0  # Monday 2013-01-07 00:00 UTC
DAY = 86_400.0


def desk_world_city():
    from crowdexpress.synthetic import synthetic_city
    return synthetic_city(34, seed=1)


def desk_world(training_days: int = 5):
    """City, network and reference paths trained on the first weekdays."""
    from crowdexpress.network import build_network, reference_paths
    from crowdexpress.synthetic import gen_synthetic

    city = desk_world_city()
    train = gen_synthetic(city, (DESK_START, DESK_START + training_days * DAY), seed=11)
    net = build_network(train, stations=city.stations)
    return city, net, reference_paths(net)


def desk_test_day(run: int) -> float:
    """Midnight of the run's test day: weekdays of the weeks after training."""
    return DESK_START + 7 * DAY * (1 + run // 5) + DAY * (run % 5)
