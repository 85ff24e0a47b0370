"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a plain numpy/Python
version with identical semantics.  The jitted set is used unless numba is
missing or ``CROWDEXPRESS_NO_JIT`` is set to a truthy value before import.
Both sets stay importable (``numba_impl`` / ``numpy_impl``) so tests and the
benchmark can compare them directly.
"""
from __future__ import annotations

import math
import os
import types

import numpy as np

EARTH_RADIUS_M = 6_371_008.8

# slack added before flooring a time budget into bins; absorbs float noise
# from summed waiting times so equal budgets always floor identically
BIN_EPS = 1e-9


def budget_bins(remaining: float, tau: float) -> int:
    """Largest bin count ``b`` with ``b * tau <= remaining`` (``-1`` if none)."""
    if math.isnan(remaining) or remaining < 0.0:
        return -1
    if math.isinf(remaining):
        return 1 << 30
    return int(math.floor(remaining / tau + BIN_EPS))


# --------------------------------------------------------------------------
# numpy / pure Python implementations
# --------------------------------------------------------------------------


def _haversine_matrix_np(lat1, lon1, lat2, lon2):
    lat1 = np.radians(np.asarray(lat1, dtype=np.float64))[:, None]
    lon1 = np.radians(np.asarray(lon1, dtype=np.float64))[:, None]
    lat2 = np.radians(np.asarray(lat2, dtype=np.float64))[None, :]
    lon2 = np.radians(np.asarray(lon2, dtype=np.float64))[None, :]
    a = (np.sin((lat2 - lat1) * 0.5) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) * 0.5) ** 2)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def _conv_trunc_np(dist, pmf, out_len):
    full = np.convolve(dist, pmf)
    out = np.zeros(out_len)
    n = min(out_len, full.shape[0])
    out[:n] = full[:n]
    return out


def _cdf_np(dist, limit):
    if limit < 0:
        return 0.0
    return float(min(1.0, dist[: limit + 1].sum()))


def _path_prob_np(pmf, wait, path, budget, tau, first_wait):
    """On-time probability of one path over dense slot arrays."""
    nb = budget_bins(budget, tau)
    width = max(nb, 0) + 1
    dist = np.zeros(width)
    dist[0] = 1.0
    w = 0.0
    for k in range(path.shape[0] - 1):
        u, v = path[k], path[k + 1]
        if k > 0 or first_wait:
            w += wait[u, v]
        dist = _conv_trunc_np(dist, pmf[u, v], width)
    return _cdf_np(dist, budget_bins(budget - w, tau))


def _dfs_max_prob_np(pmf, wait, indptr, indices, tmin, origin, first_hop, skip_hop,
                     dest, budget, tau, first_wait, ref_p, trim):
    """Branch-trimmed depth-first search over simple paths.

    ``first_hop`` (if >= 0) pins the first leg and ``skip_hop`` (if >= 0)
    forbids one first leg.  Returns ``(best_p, best_path, best_len, expanded,
    trimmed)``.  ``best_len``
    is 0 when no completed path strictly beat ``ref_p``.
    """
    n = wait.shape[0]
    width = max(budget_bins(budget, tau), 0) + 1
    best_p = ref_p
    best_path = np.full(n, -1, dtype=np.int64)
    best_len = 0
    expanded = 0
    trimmed = 0
    if budget < 0.0:
        return best_p, best_path, best_len, expanded, trimmed

    visited = np.zeros(n, dtype=np.bool_)
    path = [origin]
    visited[origin] = True
    start = np.zeros(width)
    start[0] = 1.0

    def step(u, v, dist, waited, depth):
        w = waited + (wait[u, v] if (depth > 0 or first_wait) else 0.0)
        return _conv_trunc_np(dist, pmf[u, v], width), w

    def visit(u, dist, waited, depth):
        nonlocal best_p, best_len, expanded, trimmed
        for pos in range(indptr[u], indptr[u + 1]):
            v = indices[pos]
            if visited[v]:
                continue
            if depth == 0 and ((first_hop >= 0 and v != first_hop) or v == skip_hop):
                continue
            nd, w = step(u, v, dist, waited, depth)
            expanded += 1
            if v == dest:
                p = _cdf_np(nd, budget_bins(budget - w, tau))
                if p > best_p:
                    best_p = p
                    best_len = len(path) + 1
                    best_path[: best_len - 1] = path
                    best_path[best_len - 1] = v
                continue
            if trim:
                if not math.isfinite(tmin[v]):
                    trimmed += 1
                    continue
                bound = _cdf_np(nd, budget_bins(budget - w - tmin[v], tau))
                if bound <= best_p:
                    trimmed += 1
                    continue
            visited[v] = True
            path.append(v)
            visit(v, nd, w, depth + 1)
            path.pop()
            visited[v] = False

    visit(origin, start, 0.0, 0)
    return best_p, best_path, best_len, expanded, trimmed


numpy_impl = types.SimpleNamespace(
    name="numpy",
    haversine_matrix=_haversine_matrix_np,
    dfs_max_prob=_dfs_max_prob_np,
    path_prob=_path_prob_np,
)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

numba_impl = None

if numba is not None:
    from numba import njit

    @njit(cache=True)
    def _budget_bins_nb(remaining, tau):
        if remaining < 0.0 or math.isnan(remaining):
            return -1
        if math.isinf(remaining):
            return 1 << 30
        return int(math.floor(remaining / tau + BIN_EPS))

    @njit(cache=True)
    def _haversine_matrix_nb(lat1, lon1, lat2, lon2):
        n = lat1.shape[0]
        m = lat2.shape[0]
        out = np.empty((n, m))
        d2r = math.pi / 180.0
        for i in range(n):
            p1 = lat1[i] * d2r
            l1 = lon1[i] * d2r
            c1 = math.cos(p1)
            for j in range(m):
                p2 = lat2[j] * d2r
                sdp = math.sin((p2 - p1) * 0.5)
                sdl = math.sin((lon2[j] * d2r - l1) * 0.5)
                a = sdp * sdp + c1 * math.cos(p2) * sdl * sdl
                if a > 1.0:
                    a = 1.0
                out[i, j] = 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))
        return out

    @njit(cache=True)
    def _cdf_nb(dist, limit):
        if limit < 0:
            return 0.0
        s = 0.0
        top = min(limit + 1, dist.shape[0])
        for b in range(top):
            s += dist[b]
        return min(1.0, s)

    @njit(cache=True)
    def _conv_trunc_nb(src, leg, out):
        width = out.shape[0]
        for b in range(width):
            out[b] = 0.0
        for a in range(1, leg.shape[0]):
            pa = leg[a]
            if pa == 0.0:
                continue
            for b in range(width - a):
                out[b + a] += src[b] * pa

    @njit(cache=True)
    def _path_prob_nb(pmf, wait, path, budget, tau, first_wait):
        nb = _budget_bins_nb(budget, tau)
        width = (nb if nb > 0 else 0) + 1
        dist = np.zeros(width)
        dist[0] = 1.0
        nd = np.empty(width)
        w = 0.0
        for k in range(path.shape[0] - 1):
            u = path[k]
            v = path[k + 1]
            if k > 0 or first_wait:
                w += wait[u, v]
            _conv_trunc_nb(dist, pmf[u, v], nd)
            dist, nd = nd, dist
        return _cdf_nb(dist, _budget_bins_nb(budget - w, tau))

    @njit(cache=True)
    def _dfs_max_prob_nb(pmf, wait, indptr, indices, tmin, origin, first_hop,
                         skip_hop, dest, budget, tau, first_wait, ref_p, trim):
        n = wait.shape[0]
        nb = _budget_bins_nb(budget, tau)
        width = (nb if nb > 0 else 0) + 1
        best_p = ref_p
        best_path = np.full(n, -1, dtype=np.int64)
        best_len = 0
        expanded = 0
        trimmed = 0
        if budget < 0.0:
            return best_p, best_path, best_len, expanded, trimmed

        path = np.empty(n, dtype=np.int64)
        pos = np.empty(n, dtype=np.int64)
        waited = np.zeros(n)
        dists = np.zeros((n, width))
        visited = np.zeros(n, dtype=np.bool_)
        nd = np.empty(width)

        path[0] = origin
        pos[0] = indptr[origin]
        dists[0, 0] = 1.0
        visited[origin] = True
        depth = 0
        while depth >= 0:
            u = path[depth]
            if pos[depth] >= indptr[u + 1]:
                visited[u] = False
                depth -= 1
                continue
            v = indices[pos[depth]]
            pos[depth] += 1
            if visited[v]:
                continue
            if depth == 0 and ((first_hop >= 0 and v != first_hop) or v == skip_hop):
                continue
            w = waited[depth]
            if depth > 0 or first_wait:
                w += wait[u, v]
            _conv_trunc_nb(dists[depth], pmf[u, v], nd)
            expanded += 1
            if v == dest:
                p = _cdf_nb(nd, _budget_bins_nb(budget - w, tau))
                if p > best_p:
                    best_p = p
                    best_len = depth + 2
                    for k in range(depth + 1):
                        best_path[k] = path[k]
                    best_path[depth + 1] = v
                continue
            if trim:
                if math.isinf(tmin[v]):
                    trimmed += 1
                    continue
                bound = _cdf_nb(nd, _budget_bins_nb(budget - w - tmin[v], tau))
                if bound <= best_p:
                    trimmed += 1
                    continue
            depth += 1
            path[depth] = v
            pos[depth] = indptr[v]
            waited[depth] = w
            for b in range(width):
                dists[depth, b] = nd[b]
            visited[v] = True
        return best_p, best_path, best_len, expanded, trimmed

    def _haversine_matrix_nb_wrapper(lat1, lon1, lat2, lon2):
        return _haversine_matrix_nb(
            np.ascontiguousarray(lat1, dtype=np.float64),
            np.ascontiguousarray(lon1, dtype=np.float64),
            np.ascontiguousarray(lat2, dtype=np.float64),
            np.ascontiguousarray(lon2, dtype=np.float64),
        )

    numba_impl = types.SimpleNamespace(
        name="numba",
        haversine_matrix=_haversine_matrix_nb_wrapper,
        dfs_max_prob=_dfs_max_prob_nb,
        path_prob=_path_prob_nb,
    )


def _jit_disabled() -> bool:
    return os.environ.get("CROWDEXPRESS_NO_JIT", "").strip().lower() not in ("", "0", "false", "no")


active = numpy_impl if (numba_impl is None or _jit_disabled()) else numba_impl
USING_NUMBA = active is numba_impl

haversine_matrix = active.haversine_matrix
dfs_max_prob = active.dfs_max_prob
path_prob_dense = active.path_prob
