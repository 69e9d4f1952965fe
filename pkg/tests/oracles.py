"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from polymapf.map_io import Graph, GridMap, build_graph, connected_components

INFTY = float("inf")


def floyd_warshall(graph: Graph) -> np.ndarray:
    n = graph.n
    d = np.full((n, n), INFTY)
    np.fill_diagonal(d, 0)
    for u, v, w in graph.edges():
        d[u, v] = d[v, u] = min(d[u, v], w)
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def reachability_labels(graph: Graph) -> list[frozenset]:
    """Per node, the set of nodes it can reach (transitive closure)."""
    d = floyd_warshall(graph)
    return [frozenset(np.nonzero(np.isfinite(d[v]))[0].tolist()) for v in range(graph.n)]


def brute_sum(costs) -> float:
    c = np.asarray(costs, dtype=float)
    k = len(c)
    return min(sum(c[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))


def brute_bottleneck(costs) -> float:
    c = np.asarray(costs, dtype=float)
    k = len(c)
    return min(max(c[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k)))


def brute_open_tsp(dist: np.ndarray) -> float:
    """k = 1 open tour from item 0 over items 1..m; NRPA objective is 2x the length."""
    m = dist.shape[0] - 1
    best = INFTY
    for order in itertools.permutations(range(1, m + 1)):
        at, total = 0, 0.0
        for g in order:
            total += dist[at, g]
            at = g
        best = min(best, total)
    return best


def random_graph(rng: np.random.Generator, n: int, p: float, max_w: int = 1) -> Graph:
    max_w = min(max_w, n * n)  # weights are capped at n^2
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v, int(rng.integers(1, max_w + 1))))
    return Graph.from_edges(n, edges)


def random_grid(rng: np.random.Generator, width: int, height: int, blocked: float) -> GridMap:
    passable = rng.random((height, width)) >= blocked
    return GridMap(width, height, passable)


def random_anonymous(rng: np.random.Generator, max_side=16, max_k=12, connectivity="four", tries=50):
    """Grid, graph, index, starts, goals with all goals reachable by some agent."""
    for _ in range(tries):
        w, h = (int(x) for x in rng.integers(2, max_side + 1, 2))
        grid = random_grid(rng, w, h, float(rng.uniform(0.0, 0.35)))
        graph, index = build_graph(grid, connectivity)
        if graph.n < 2:
            continue
        labels = connected_components(graph)
        big = np.bincount(labels).argmax()
        nodes = np.nonzero(labels == big)[0]
        if len(nodes) < 2:
            continue
        k = int(rng.integers(1, min(max_k, len(nodes) // 2) + 1))
        pick = rng.permutation(nodes)
        return grid, graph, index, [int(v) for v in pick[:k]], [int(v) for v in pick[k:2 * k]]
    raise RuntimeError("could not draw an instance")


def joint_makespans(graph: Graph, starts: tuple[int, ...]) -> dict[frozenset, int]:
    """BFS over joint configurations: optimal makespan from ``starts`` to every
    reachable unordered goal set (anonymous agents, no vertex or swap conflicts)."""
    adj = [[u] + graph.neighbors(u).tolist() for u in range(graph.n)]
    start = tuple(sorted(starts))
    seen = {start: 0}
    queue = deque([start])
    while queue:
        conf = queue.popleft()
        t = seen[conf]
        for move in itertools.product(*(adj[v] for v in conf)):
            if len(set(move)) != len(move):
                continue
            swapped = any(move[i] == conf[j] and move[j] == conf[i]
                          for i in range(len(conf)) for j in range(i + 1, len(conf))
                          if conf[i] != move[i])
            if swapped:
                continue
            nxt = tuple(sorted(move))
            if nxt not in seen:
                seen[nxt] = t + 1
                queue.append(nxt)
    return {frozenset(c): t for c, t in seen.items()}


def pairwise_violations(paths: list[list[int]], graph: Graph) -> set[tuple[str, int]]:
    """Naive checker: every pair of agents at every step; returns (kind, t)."""
    T = max(len(p) for p in paths)
    at = [p + [p[-1]] * (T - len(p)) for p in paths]
    adj = {(u, v) for u, v, _ in graph.edges()} | {(v, u) for u, v, _ in graph.edges()}
    out = set()
    for t in range(T):
        for i in range(len(at)):
            if t and at[i][t] != at[i][t - 1] and (at[i][t - 1], at[i][t]) not in adj:
                out.add(("teleport", t))
            for j in range(i + 1, len(at)):
                if at[i][t] == at[j][t]:
                    out.add(("vertex", t))
                if t and at[i][t] == at[j][t - 1] and at[j][t] == at[i][t - 1] and at[i][t] != at[i][t - 1]:
                    out.add(("edge_swap", t))
    return out
