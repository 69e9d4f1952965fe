"""Sum-of-cost and bottleneck assignment on shortest-path cost matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .shortest_paths import INF


class InfeasibleAssignment(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    perm: tuple[int, ...]  # agent i -> column perm[i]
    total: int
    max_entry: int


def _as_cost_matrix(costs) -> np.ndarray:
    a = np.asarray(costs)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {a.shape}")
    if a.dtype.kind == "f":
        out = np.where(np.isfinite(a), a, INF)
        if np.any((out != np.floor(out)) & (out < INF)):
            raise ValueError("cost entries must be integers")
        a = out.astype(np.int64)
    a = a.astype(np.int64)
    if np.any(a < 0):
        raise ValueError("cost entries must be non-negative")
    return np.minimum(a, INF)


def _check_rows_cols(a: np.ndarray):
    finite = a < INF
    bad_rows = np.nonzero(~finite.any(axis=1))[0]
    bad_cols = np.nonzero(~finite.any(axis=0))[0]
    if len(bad_rows) or len(bad_cols):
        raise InfeasibleAssignment(
            f"rows {bad_rows.tolist()} / columns {bad_cols.tolist()} have no finite entry"
        )


@numba.njit(cache=True)
def _shortest_augmenting_path(a):
    # Row-by-row Dijkstra augmentation on reduced costs with dual potentials.
    n = a.shape[0]
    big = np.int64(1) << 62
    u = np.zeros(n + 1, dtype=np.int64)
    v = np.zeros(n + 1, dtype=np.int64)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1, dtype=np.int64)
    used = np.empty(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = big
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = big
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm


def _finish(a: np.ndarray, perm) -> Assignment:
    sel = a[np.arange(len(perm)), perm]
    if np.any(sel >= INF):
        raise InfeasibleAssignment("no perfect matching over finite entries")
    return Assignment(tuple(int(j) for j in perm), int(sel.sum()), int(sel.max()) if len(sel) else 0)


def solve_sum(costs) -> Assignment:
    """Minimum-total assignment (shortest augmenting paths, O(k^3))."""
    a = _as_cost_matrix(costs)
    if a.shape[0] == 0:
        return Assignment((), 0, 0)
    _check_rows_cols(a)
    finite = a[a < INF]
    # unreachable pairs get a cost no feasible assignment can reach
    sub = int(finite.max()) * a.shape[0] + 1
    work = np.where(a < INF, a, sub)
    perm = _shortest_augmenting_path(work)
    return _finish(a, perm)


def _has_perfect_matching(mask: np.ndarray) -> bool:
    if not mask.any(axis=1).all():
        return False
    m = maximum_bipartite_matching(csr_matrix(mask.astype(np.int8)), perm_type="column")
    return bool(np.all(m >= 0))


def solve_bottleneck(costs) -> Assignment:
    """Minimise the largest selected entry; ties resolved by minimum total."""
    a = _as_cost_matrix(costs)
    if a.shape[0] == 0:
        return Assignment((), 0, 0)
    _check_rows_cols(a)
    values = np.unique(a[a < INF])
    lo, hi = 0, len(values) - 1
    if not _has_perfect_matching(a <= values[hi]):
        raise InfeasibleAssignment("no perfect matching over finite entries")
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(a <= values[mid]):
            hi = mid
        else:
            lo = mid + 1
    threshold = values[lo]
    return solve_sum(np.where(a <= threshold, a, INF))
