"""Per-goal shortest-path trees and distance matrices."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .map_io import Graph

# Distance sentinel for unreachable nodes. Larger than any path length
# (weights <= n^2, so paths <= n^3) and safe to add once without overflow.
INF = np.int64(1 << 62)


class NavigationError(ValueError):
    pass


def sat_add(a: int, b: int) -> int:
    """Saturating addition on distances: anything plus INF is INF."""
    if a >= INF or b >= INF:
        return int(INF)
    return min(int(a) + int(b), int(INF))


@numba.njit(cache=True)
def _bfs(indptr, indices, n, source):
    dist = np.full(n, INF, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    dist[source] = 0
    queue[0] = source
    head, tail = 0, 1
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if dist[v] == INF:
                dist[v] = du
                queue[tail] = v
                tail += 1
    return dist


@numba.njit(cache=True)
def _dijkstra(indptr, indices, weights, n, source):
    dist = np.full(n, INF, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    dist[source] = 0
    heap = [(np.int64(0), np.int64(source))]
    while len(heap) > 0:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            nd = d + weights[p]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


@numba.njit(cache=True)
def _parents(indptr, indices, weights, dist, source):
    # canonical parent: smallest-id neighbour lying on a shortest path
    n = len(dist)
    parent = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if v == source or dist[v] == INF:
            continue
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if dist[u] != INF and dist[u] + weights[p] == dist[v]:
                parent[v] = u
                break  # neighbours are sorted by id
    return parent


@dataclass(frozen=True, eq=False)
class ShortestPathTree:
    """Distances to ``goal`` and next-hop pointers toward it."""

    goal: int
    dist: np.ndarray  # int64, INF where unreachable
    parent: np.ndarray  # int64, -1 for the goal and unreachable nodes

    def reachable(self, v: int) -> bool:
        return self.dist[v] < INF

    def path(self, start: int) -> list[int]:
        """Node sequence from ``start`` to the goal along parent pointers."""
        if not self.reachable(start):
            raise NavigationError(f"node {start} cannot reach goal {self.goal}")
        out = [start]
        while out[-1] != self.goal:
            out.append(int(self.parent[out[-1]]))
        return out


def build_tree(graph: Graph, goal: int, method: str = "auto") -> ShortestPathTree:
    """Shortest-path tree rooted at ``goal``.

    ``method`` is "bfs", "dijkstra" or "auto" (BFS on unit-weight graphs).
    """
    if not 0 <= goal < graph.n:
        raise NavigationError(f"goal {goal} not in graph")
    if method == "auto":
        method = "bfs" if graph.unit_weight else "dijkstra"
    if method == "bfs":
        if not graph.unit_weight:
            raise ValueError("BFS trees require unit edge weights")
        dist = _bfs(graph.indptr, graph.indices, graph.n, goal)
    elif method == "dijkstra":
        dist = _dijkstra(graph.indptr, graph.indices, graph.weights, graph.n, goal)
    else:
        raise ValueError(f"unknown method {method!r}")
    parent = _parents(graph.indptr, graph.indices, graph.weights, dist, goal)
    return ShortestPathTree(int(goal), dist, parent)


def next_hop(tree: ShortestPathTree, at: int) -> int:
    if at == tree.goal:
        raise NavigationError(f"already at goal {at}")
    if tree.dist[at] >= INF:
        raise NavigationError(f"node {at} cannot reach goal {tree.goal}")
    return int(tree.parent[at])


class TreeCache:
    """Lazily built, memoised trees for one graph."""

    def __init__(self, graph: Graph, method: str = "auto"):
        self.graph = graph
        self.method = method
        self._trees: dict[int, ShortestPathTree] = {}

    def __getitem__(self, goal: int) -> ShortestPathTree:
        tree = self._trees.get(goal)
        if tree is None:
            tree = self._trees[goal] = build_tree(self.graph, goal, self.method)
        return tree

    def __contains__(self, goal) -> bool:
        return goal in self._trees

    def __len__(self):
        return len(self._trees)

    def warm(self, goals: Iterable[int]) -> "TreeCache":
        for g in goals:
            self[int(g)]
        return self

    def dist(self, source: int, goal: int) -> int:
        return int(self[goal].dist[source])


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    rows: tuple[int, ...]
    cols: tuple[int, ...]
    entries: np.ndarray  # int64 (len(rows), len(cols)), INF for unreachable pairs

    def __getitem__(self, ij):
        return self.entries[ij]

    @property
    def shape(self):
        return self.entries.shape


def distance_matrix(
    graph: Graph,
    sources: Sequence[int],
    targets: Sequence[int],
    trees: TreeCache | None = None,
) -> DistanceMatrix:
    """Source x target distances, one tree per target (graph is undirected)."""
    if trees is None:
        trees = TreeCache(graph)
    src = np.asarray(sources, dtype=np.int64)
    entries = np.empty((len(src), len(targets)), dtype=np.int64)
    for j, t in enumerate(targets):
        entries[:, j] = trees[int(t)].dist[src]
    return DistanceMatrix(tuple(int(s) for s in sources), tuple(int(t) for t in targets), entries)
