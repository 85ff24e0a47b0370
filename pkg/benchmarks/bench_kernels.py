"""Time the numba kernels against the numpy fallback on a 34-station city.

    python benchmarks/bench_kernels.py [--queries 300] [--repeat 3]

Both implementations are called directly, so one process covers both
regardless of CROWDEXPRESS_NO_JIT.  Results are checked to agree before
any timing is reported.
"""
import argparse
import time

import numpy as np

from crowdexpress import _kernels
from crowdexpress.network import build_network, reference_paths
from crowdexpress.synthetic import gen_synthetic, synthetic_city

START = 1357516800.0  # Monday 2013-01-07 00:00 UTC
SLOT = 1              # weekday midday


def world():
    city = synthetic_city(34, seed=1)
    train = gen_synthetic(city, (START, START + 5 * 86_400.0), seed=11)
    net = build_network(train, stations=city.stations)
    return city, net, reference_paths(net)


def workloads(city, net, refs, n_queries, rng):
    arr = net.slot_arrays(SLOT)
    n = len(net)
    dfs, paths = [], []
    while len(dfs) < n_queries:
        o, d = (int(x) for x in rng.choice(n, size=2, replace=False))
        budget = float(rng.uniform(900.0, 5400.0))
        tmin = refs.t_min_to(d, SLOT)
        if not np.isfinite(tmin[o]):
            continue
        dfs.append((arr.pmf, arr.wait, arr.indptr, arr.indices, tmin, o, -1, -1, d,
                    budget, float(net.tau), False, 0.0, True))
        path = refs.path_max(o, d, SLOT)
        if len(path) > 1:
            paths.append((arr.pmf, arr.wait, np.asarray(path, dtype=np.int64), budget,
                          float(net.tau), False))
    lat = np.array([s.location.lat for s in city.stations])
    lon = np.array([s.location.lon for s in city.stations])
    pts = gen_synthetic(city, (START, START + 3600.0 * 3), seed=3)
    plat = np.array([r.origin.lat for r in pts])
    plon = np.array([r.origin.lon for r in pts])
    return dfs, paths, (plat, plon, lat, lon)


def timed(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")

    city, net, refs = world()
    dfs, paths, hav = workloads(city, net, refs, args.queries, np.random.default_rng(args.seed))
    impls = (_kernels.numba_impl, _kernels.numpy_impl)
    cases = {
        f"dfs_max_prob x{len(dfs)}": lambda k: [k.dfs_max_prob(*a)[0] for a in dfs],
        f"path_prob x{len(paths)}": lambda k: [k.path_prob(*a) for a in paths],
        f"haversine {len(hav[0])}x{len(hav[2])}": lambda k: k.haversine_matrix(*hav),
    }

    t = time.perf_counter()
    for run in cases.values():
        run(_kernels.numba_impl)
    print(f"{len(net)} stations, {len(net.edges)} edges; numba compile/warm-up {time.perf_counter() - t:.2f} s")
    print(f"{'kernel':<24}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, run in cases.items():
        (t_nb, out_nb), (t_np, out_np) = (timed(lambda: run(k), args.repeat) for k in impls)
        if not np.allclose(np.asarray(out_nb), np.asarray(out_np), rtol=0, atol=1e-9):
            raise SystemExit(f"{name}: implementations disagree")
        print(f"{name:<24}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
