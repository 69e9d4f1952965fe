"""Regular vs anonymous on one map/scen pair, the way the headline table is laid out.

    python scripts/compare_modes.py --map data/city/City_0_256.map \
        --scen data/city/City_0_256-random-1.scen --agents 950
"""

import argparse
import json
from pathlib import Path

from polymapf.runner import RunConfig, load_problem, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--map", type=Path, default=Path("data/city/City_0_256.map"))
    ap.add_argument("--scen", type=Path, default=Path("data/city/City_0_256-random-1.scen"))
    ap.add_argument("--agents", type=int, default=950)
    ap.add_argument("--connectivity", default="four")
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args()

    base = dict(map=args.map, scen=args.scen, agents=args.agents, connectivity=args.connectivity)
    problem = load_problem(RunConfig(**base))
    rows = {}
    for mode in ("regular", "anonymous"):
        out = run(RunConfig(mode=mode, **base), problem)
        rows[mode] = {**out.kpis.to_dict(), "bound": out.lower_bound, "seconds": round(out.wall_time, 2)}

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'':10} {'sum-of-cost':>12} {'makespan':>9} {'potential':>10} {'resolved':>9} {'seconds':>8}")
    for mode, r in rows.items():
        print(f"{mode:10} {r['sum_of_cost']:>12} {r['makespan']:>9} {r['conflicts_potential']:>10} "
              f"{r['conflicts_resolved']:>9} {r['seconds']:>8}")
    b = rows["regular"]["bound"]
    print(f"fixed-assignment bound: sum-of-cost {b['sum_of_cost']}, makespan {b['makespan']}")
    reg, ano = rows["regular"], rows["anonymous"]
    print("reduction: " + ", ".join(
        f"{k} {reg[k] / max(ano[k], 1):.1f}x" for k in ("sum_of_cost", "makespan", "conflicts_potential")))


if __name__ == "__main__":
    main()
