import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import floyd_warshall, random_graph
from polymapf.map_io import Graph
from polymapf.shortest_paths import (
    INF, NavigationError, TreeCache, build_tree, distance_matrix, next_hop, sat_add,
)

PATH3 = Graph.from_edges(3, [(0, 1), (1, 2)])


def as_float(dist):
    return np.where(dist >= INF, np.inf, dist).astype(float)


def test_single_node():
    t = build_tree(Graph.from_edges(1, []), 0)
    assert t.dist.tolist() == [0] and t.parent[0] == -1


def test_path_graph():
    t = build_tree(PATH3, 2)
    assert t.dist.tolist() == [2, 1, 0]
    assert t.parent[0] == 1 and t.parent[1] == 2
    assert next_hop(t, 0) == 1


def test_next_hop_errors():
    t = build_tree(PATH3, 2)
    with pytest.raises(NavigationError):
        next_hop(t, 2)
    t = build_tree(Graph.from_edges(3, [(0, 1)]), 2)
    assert t.dist[0] >= INF and t.parent[0] == -1
    with pytest.raises(NavigationError):
        next_hop(t, 0)


def test_sat_add():
    assert sat_add(INF, 5) == INF and sat_add(3, 4) == 7


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 25), st.floats(0.05, 0.4), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_dist_matches_floyd_warshall(n, p, max_w, seed):
    graph = random_graph(np.random.default_rng(seed), n, p, max_w)
    fw = floyd_warshall(graph)
    for goal in range(n):
        tree = build_tree(graph, goal)
        assert np.array_equal(as_float(tree.dist), fw[:, goal])
        for v in range(n):
            if v != goal and tree.reachable(v):
                par = int(tree.parent[v])
                assert tree.dist[v] == graph.weight(v, par) + tree.dist[par]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 25), st.floats(0.05, 0.4), st.integers(0, 2**32 - 1))
def test_bfs_equals_dijkstra(n, p, seed):
    graph = random_graph(np.random.default_rng(seed), n, p)
    for goal in range(n):
        a, b = build_tree(graph, goal, "bfs"), build_tree(graph, goal, "dijkstra")
        assert np.array_equal(a.dist, b.dist) and np.array_equal(a.parent, b.parent)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_walk_and_sum_terminates(n, max_w, seed):
    graph = random_graph(np.random.default_rng(seed), n, 0.3, max_w)
    for goal in range(n):
        tree = build_tree(graph, goal)
        for v in range(n):
            if not tree.reachable(v):
                continue
            at, total, steps = v, 0, 0
            while at != goal:
                nxt = next_hop(tree, at)
                total += graph.weight(at, nxt)
                at, steps = nxt, steps + 1
                assert steps <= n
            assert total == tree.dist[v]


def test_distance_matrix_small():
    assert distance_matrix(PATH3, [1], [1]).entries.tolist() == [[0]]
    assert distance_matrix(PATH3, [0], [2]).entries.tolist() == [[2]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distance_matrix_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    graph = random_graph(rng, 20, 0.15, 4)
    fw = floyd_warshall(graph)
    src, dst = rng.choice(20, 4, replace=False), rng.choice(20, 6, replace=False)
    dm = distance_matrix(graph, src.tolist(), dst.tolist())
    assert np.array_equal(as_float(dm.entries), fw[np.ix_(src, dst)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matrix_symmetric_and_triangle(seed):
    rng = np.random.default_rng(seed)
    graph = random_graph(rng, 15, 0.2, 3)
    labels = rng.choice(15, 7, replace=False).tolist()
    d = as_float(distance_matrix(graph, labels, labels, TreeCache(graph)).entries)
    assert np.array_equal(d, d.T) and not d.diagonal().any()
    for i in range(7):
        for j in range(7):
            assert d[i, j] <= (d[i, :] + d[:, j]).min()
