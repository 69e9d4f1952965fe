"""Best tour score vs. search effort for combinatorial instances on a map.

Prints one CSV row per (level, iterations, seed) with the final score, the
number of rollouts and the seconds spent. The first k goal cells are the
agents' starts, as in the combinatorial pipeline.

    python scripts/nrpa_convergence.py --map tests/data/bench/rooms12.map \
        --scen tests/data/bench/rooms12.scen --agents 3 --levels 1 2 3
"""

import argparse
import csv
import sys
import time
from pathlib import Path

from polymapf.nrpa import item_distances, search, seed_policy
from polymapf.runner import RunConfig, combinatorial_goals, load_problem
from polymapf.shortest_paths import TreeCache


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--map", type=Path, required=True)
    ap.add_argument("--scen", type=Path, required=True)
    ap.add_argument("--agents", type=int, default=2)
    ap.add_argument("--levels", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--iterations", type=int, nargs="+", default=[5, 10, 30])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--no-seed-policy", action="store_true", help="start from a zero policy")
    args = ap.parse_args()

    config = RunConfig(map=args.map, scen=args.scen, mode="combinatorial", agents=args.agents)
    problem = load_problem(config)
    starts, goals = combinatorial_goals(problem, config)
    d = item_distances(starts, goals, TreeCache(problem.graph))
    policy = None if args.no_seed_policy else seed_policy(d, len(starts))

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["level", "iterations", "seed", "score", "rollouts", "seconds"])
    for level in args.levels:
        for it in args.iterations:
            for seed in range(args.seeds):
                t0 = time.perf_counter()
                res = search(level, it, d, len(starts), seed=seed, policy=policy)
                w.writerow([level, it, seed, f"{res.tour.score:.3f}", res.rollouts,
                            f"{time.perf_counter() - t0:.3f}"])


if __name__ == "__main__":
    main()
