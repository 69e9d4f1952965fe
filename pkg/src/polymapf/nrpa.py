"""Nested Rollout Policy Adaptation for open multi-agent tours.

Item encoding (L = m + k items):

* item 0      -- agent 0's start context, and the separator token drawn by
                 rollouts to close one agent's tour and open the next one;
* items 1..m  -- goals;
* items m+r   -- start context of agent r (1 <= r < k).

A tour is the drawn sequence (length m + k - 1) without the implicit
leading root; item 0 occurs in it exactly k - 1 times. After the r-th
separator the rollout continues from item m + r, so distance lookups use
the next agent's physical start.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .shortest_paths import INF, TreeCache

CLAMP = 20.0
UNREACHABLE = 1e15  # stands in for infinite item distances inside rollouts


class TourError(ValueError):
    pass


@dataclass
class Policy:
    values: np.ndarray  # (m + k, m + k) float64
    k: int

    @property
    def m(self) -> int:
        return self.values.shape[0] - self.k

    @classmethod
    def zeros(cls, m: int, k: int) -> "Policy":
        return cls(np.zeros((m + k, m + k)), k)

    def copy(self) -> "Policy":
        return Policy(self.values.copy(), self.k)


@dataclass(frozen=True)
class Tour:
    items: tuple[int, ...]
    score: float


@dataclass(frozen=True)
class AgendaSet:
    agendas: tuple[tuple[int, ...], ...]  # goal items per agent, in visiting order


@dataclass
class SearchResult:
    tour: Tour
    rollouts: int
    trace: list[float]  # best score after each top-level iteration
    level_traces: list[tuple[int, list[float]]] = field(default_factory=list)
    rollout_scores: list[float] = field(default_factory=list)


def item_locations(starts: Sequence[int], goals: Sequence[int]) -> list[int]:
    return [int(starts[0]), *map(int, goals), *map(int, starts[1:])]


def item_distances(starts: Sequence[int], goals: Sequence[int], trees: TreeCache) -> np.ndarray:
    """Pairwise item distances as float64, unreachable pairs -> UNREACHABLE."""
    locs = item_locations(starts, goals)
    d = np.empty((len(locs), len(locs)), dtype=np.float64)
    src = np.asarray(locs, dtype=np.int64)
    for j, t in enumerate(locs):
        col = trees[t].dist[src]
        d[:, j] = np.where(col < INF, col, UNREACHABLE)
    return d


def _as_dist(distances) -> np.ndarray:
    d = np.asarray(getattr(distances, "entries", distances), dtype=np.float64)
    d = np.where(np.isfinite(d) & (d < float(INF)), d, UNREACHABLE)
    return np.ascontiguousarray(d)


@numba.njit(cache=True)
def _rollout(expw, dist, m, k, rng, tour):
    visits = np.ones(m + 1, dtype=np.int64)
    visits[0] = k - 1
    moves = np.empty(m + 1, dtype=np.int64)
    value = np.empty(m + 1, dtype=np.float64)
    node = 0
    seps = 0
    ms = 0.0
    cost = 0.0
    span = 0.0
    for size in range(m + k - 1):
        succs = 0
        total = 0.0
        for i in range(m + 1):
            if visits[i] != 0:
                moves[succs] = i
                value[succs] = expw[node, i]
                total += value[succs]
                succs += 1
        # roulette by cumulative-sum inversion
        r = rng.random() * total
        acc = 0.0
        pick = succs - 1
        for i in range(succs):
            acc += value[i]
            if r < acc:
                pick = i
                break
        c = moves[pick]
        tour[size] = c
        visits[c] -= 1
        if c == 0:
            # next agent: the edge into its start is not counted, timer restarts
            seps += 1
            if span > ms:
                ms = span
            span = 0.0
            node = m + seps
        else:
            d = dist[node, c]
            cost += d
            span += d
            node = c
    if span > ms:
        ms = span
    return ms + cost / k


@numba.njit(cache=True)
def _adapt(pol, glob, tour, m, k):
    visits = np.ones(m + 1, dtype=np.int64)
    visits[0] = k - 1
    moves = np.empty(m + 1, dtype=np.int64)
    node = 0
    seps = 0
    for j in range(len(tour)):
        succs = 0
        for i in range(m + 1):
            if visits[i] != 0:
                moves[succs] = i
                succs += 1
        # full step at a start context, 1/k inside an agent's tour
        lam = 1.0 if (node == 0 or node > m) else 1.0 / k
        c = tour[j]
        pol[node, c] += lam
        z = 0.0
        for i in range(succs):
            z += np.exp(min(max(glob[node, moves[i]], -CLAMP), CLAMP))
        for i in range(succs):
            pol[node, moves[i]] -= lam * np.exp(min(max(glob[node, moves[i]], -CLAMP), CLAMP)) / z
        for i in range(succs):
            x = pol[node, moves[i]]
            pol[node, moves[i]] = min(max(x, -CLAMP), CLAMP)
        visits[c] -= 1
        if c == 0:
            seps += 1
            node = m + seps
        else:
            node = c


@numba.njit(cache=True)
def _level1(pol, glob, dist, m, k, iterations, rng, log, best_tour):
    # level-1 loop: global is untouched by level-0 rollouts, so exp() once
    pol[:, :] = glob
    expw = np.exp(np.minimum(np.maximum(glob, -CLAMP), CLAMP))
    tour = np.empty(m + k - 1, dtype=np.int64)
    best = np.inf
    for it in range(iterations):
        score = _rollout(expw, dist, m, k, rng, tour)
        log[it] = score
        if score < best:
            best = score
            best_tour[:] = tour
            _adapt(pol, glob, best_tour, m, k)
    glob[:, :] = pol
    return best


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.PCG64(seed_or_rng))


def rollout(policy: Policy, distances, k: int | None = None, rng=None) -> Tour:
    """One policy-guided random tour; ``rng`` is a Generator or a seed."""
    k = policy.k if k is None else k
    d = _as_dist(distances)
    m = d.shape[0] - k
    expw = np.exp(np.clip(policy.values, -CLAMP, CLAMP))
    tour = np.empty(m + k - 1, dtype=np.int64)
    score = _rollout(expw, d, m, k, _rng(rng), tour)
    return Tour(tuple(int(t) for t in tour), float(score))


def adapt(policy: Policy, tour: Tour | Sequence[int], global_policy: Policy | None = None) -> Policy:
    """Return ``policy`` shifted toward ``tour``.

    The softmax normaliser is taken from ``global_policy`` (defaults to
    ``policy`` itself); increments and decrements land on ``policy``.
    """
    items = np.asarray(getattr(tour, "items", tour), dtype=np.int64)
    out = policy.copy()
    glob = (global_policy or policy).values
    _adapt(out.values, np.ascontiguousarray(glob, dtype=np.float64), items, policy.m, policy.k)
    return out


def tour_score(items: Sequence[int], distances, k: int) -> float:
    d = _as_dist(distances)
    m = d.shape[0] - k
    node, seps, ms, cost, span = 0, 0, 0.0, 0.0, 0.0
    for c in items:
        if c == 0:
            seps += 1
            ms, span = max(ms, span), 0.0
            node = m + seps
        else:
            cost += d[node, c]
            span += d[node, c]
            node = c
    return max(ms, span) + cost / k


def search(
    level: int,
    iterations: int,
    distances,
    k: int,
    seed=0,
    policy: Policy | None = None,
    instrument: bool = False,
) -> SearchResult:
    """Nested search; keeps one policy per level plus the shared global one."""
    if level < 0 or iterations < 1:
        raise ValueError("level must be >= 0 and iterations >= 1")
    d = _as_dist(distances)
    L = d.shape[0]
    m = L - k
    if m < 0 or k < 1:
        raise ValueError("distance matrix smaller than the number of agents")
    rng = _rng(seed)
    glob = np.zeros((L, L)) if policy is None else np.array(policy.values, dtype=np.float64)
    levels = [np.zeros((L, L)) for _ in range(level + 1)]
    result = SearchResult(Tour((), np.inf), 0, [])
    log = np.empty(iterations, dtype=np.float64)

    def rec(lvl: int) -> tuple[float, np.ndarray]:
        best_tour = np.empty(m + k - 1, dtype=np.int64)
        if lvl == 0:
            expw = np.exp(np.clip(glob, -CLAMP, CLAMP))
            score = _rollout(expw, d, m, k, rng, best_tour)
            result.rollouts += 1
            if instrument:
                result.rollout_scores.append(float(score))
            return score, best_tour
        if lvl == 1:
            score = _level1(levels[1], glob, d, m, k, iterations, rng, log, best_tour)
            result.rollouts += iterations
            if instrument:
                result.rollout_scores.extend(log.tolist())
                result.level_traces.append((1, np.minimum.accumulate(log).tolist()))
            return score, best_tour
        levels[lvl][:] = glob
        best = np.inf
        trace = []
        for _ in range(iterations):
            score, tour = rec(lvl - 1)
            if score < best:
                best = score
                best_tour[:] = tour
                _adapt(levels[lvl], glob, best_tour, m, k)
            trace.append(best)
        glob[:] = levels[lvl]
        if instrument:
            result.level_traces.append((lvl, trace))
        if lvl == level:
            result.trace = trace
        return best, best_tour

    score, tour = rec(level)
    if level == 0:
        result.trace = [float(score)]
    elif level == 1:
        result.trace = np.minimum.accumulate(log).tolist()
    result.tour = Tour(tuple(int(t) for t in tour), float(score))
    return result


def split_tour(tour: Tour | Sequence[int], k: int) -> AgendaSet:
    """Cut a combined tour at its separators into per-agent goal agendas.

    A leading root item (a tour written with its implicit 0 prefix) is
    accepted and dropped.
    """
    items = list(getattr(tour, "items", tour))
    if items and items[0] == 0 and items.count(0) == k:
        items = items[1:]
    if items.count(0) != k - 1:
        raise TourError(f"tour has {items.count(0)} separators, expected {k - 1}")
    goals = [i for i in items if i != 0]
    if len(set(goals)) != len(goals):
        raise TourError("a goal occurs more than once in the tour")
    agendas: list[list[int]] = [[]]
    for it in items:
        if it == 0:
            agendas.append([])
        else:
            agendas[-1].append(int(it))
    return AgendaSet(tuple(tuple(a) for a in agendas))


def seed_policy(distances, k: int) -> Policy:
    """Preset preferences -d(a, b) / mean distance; unreachable pairs get -CLAMP."""
    d = np.asarray(getattr(distances, "entries", distances), dtype=np.float64)
    reach = np.isfinite(d) & (d < min(float(INF), UNREACHABLE))
    off = reach & ~np.eye(d.shape[0], dtype=bool)
    mean = d[off].mean() if off.any() else 1.0
    if mean <= 0:
        mean = 1.0
    vals = np.where(reach, -d / mean, -CLAMP)
    return Policy(np.clip(vals, -CLAMP, CLAMP), k)
