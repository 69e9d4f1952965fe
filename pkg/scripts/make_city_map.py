"""Generate a dense city-style 256x256 map and a random scenario in MovingAI format.

Streets of varying width cut the map into building blocks; some blocks get
courtyards and alleys. Only the largest 4-connected region stays passable.

    python scripts/make_city_map.py --out data/city --agents 1000 --seed 7
"""

import argparse
from pathlib import Path

import numpy as np

from polymapf.map_io import GridMap, ScenarioEntry, build_graph, connected_components, format_map, format_scenario
from polymapf.shortest_paths import build_tree


def city_grid(size: int, rng: np.random.Generator) -> np.ndarray:
    P = np.zeros((size, size), dtype=bool)
    for axis in (0, 1):
        pos = int(rng.integers(0, 6))
        while pos < size:
            width = int(rng.choice([2, 2, 3, 3, 4, 6]))
            if axis == 0:
                P[pos:pos + width, :] = True
            else:
                P[:, pos:pos + width] = True
            pos += width + int(rng.integers(8, 26))
    # courtyards and alleys inside blocks
    for _ in range(size * size // 400):
        y, x = rng.integers(0, size, 2)
        h, w = rng.integers(2, 7, 2)
        P[y:y + h, x:x + w] = True
    for _ in range(size // 2):
        y, x = rng.integers(0, size, 2)
        if rng.random() < 0.5:
            P[y, x:x + int(rng.integers(4, 20))] = True
        else:
            P[y:y + int(rng.integers(4, 20)), x] = True
    # a few plazas and parks (obstacle-free squares)
    for _ in range(6):
        y, x = rng.integers(0, size - 16, 2)
        P[y:y + 14, x:x + 14] = True
    return P


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("data/city"))
    ap.add_argument("--name", default="City_0_256")
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--agents", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    P = city_grid(args.size, rng)
    grid = GridMap(args.size, args.size, P, "octile")
    graph, index = build_graph(grid, "four")
    labels = connected_components(graph)
    big = np.bincount(labels).argmax()
    keep = np.zeros_like(P)
    for v in np.nonzero(labels == big)[0]:
        x, y = index.cell(v)
        keep[y, x] = True
    grid = GridMap(args.size, args.size, keep, "octile")
    graph, index = build_graph(grid, "four")

    nodes = rng.permutation(graph.n)
    starts, goals = nodes[:args.agents], nodes[args.agents:2 * args.agents]
    entries = []
    for s, g in zip(starts, goals):
        d = int(build_tree(graph, int(g)).dist[s])
        entries.append(ScenarioEntry(index.cell(int(s)), index.cell(int(g)), float(d), d // 4))

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{args.name}.map").write_text(format_map(grid))
    (args.out / f"{args.name}-random-1.scen").write_text(
        format_scenario(entries, grid, f"{args.name}.map"))
    print(f"{graph.n} passable cells, {len(entries)} scenario rows -> {args.out}")


if __name__ == "__main__":
    main()
