"""Command line: ``polymapf solve | validate | bench``.

Exit codes: 0 solved and valid, 2 unsolvable, 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .map_io import Instance, MapFormatError, Mode
from .runner import RunConfig, ValidationFailure, combinatorial_goals, load_problem, run
from .simulation import Schedule, SimulationError, TimeLimitExceeded, render_frame
from .validate import KPI_KEYS, validate

BENCH_ENV = "POLYMAPF_BENCH_DIR"
EXIT_OK, EXIT_ERROR, EXIT_UNSOLVABLE = 0, 1, 2

ROW_KEYS = ("instance", "mode", *KPI_KEYS, "lb_sum_of_cost", "lb_makespan", "wall_time", "error")

log = logging.getLogger("polymapf")


def _add_run_flags(p: argparse.ArgumentParser, need_files: bool = True) -> None:
    if need_files:
        p.add_argument("--map", type=Path, required=True)
        p.add_argument("--scen", type=Path, required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="anonymous")
    p.add_argument("--connectivity", choices=["four", "eight"], default="four")
    p.add_argument("--objective", choices=["sum", "bottleneck"], default="sum")
    p.add_argument("--agents", type=int, default=None, help="number of agents k (default: all rows)")
    p.add_argument("--goals", type=int, default=None, help="number of goal cells m (combinatorial)")
    p.add_argument("--nrpa-level", type=int, default=3)
    p.add_argument("--nrpa-iterations", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=1800.0, help="seconds per instance")
    p.add_argument("--starts-are-goals", action="store_true",
                   help="combinatorial: count the k start cells as goals too")


def _config(args, **overrides) -> RunConfig:
    fields = dict(
        map=getattr(args, "map", None), scen=getattr(args, "scen", None), mode=args.mode,
        connectivity=args.connectivity, objective=args.objective, agents=args.agents,
        goals=args.goals, nrpa_level=args.nrpa_level, nrpa_iterations=args.nrpa_iterations,
        seed=args.seed, output_format=getattr(args, "output_format", "json"),
        render=getattr(args, "render", False), time_limit=args.time_limit,
        starts_are_goals=args.starts_are_goals, trace=getattr(args, "trace", None) is not None,
    )
    fields.update(overrides)
    return RunConfig(**fields)


def _write_table(rows: list[dict], keys, fmt: str, out) -> None:
    if fmt == "csv":
        w = csv.DictWriter(out, fieldnames=list(keys), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    else:
        json.dump(rows, out, indent=2)
        out.write("\n")


def cmd_solve(args) -> int:
    config = _config(args)
    problem = load_problem(config)
    on_step = None
    if config.render:
        goals = {problem.index.node(e.goal) for e in problem.entries}

        def draw(sim):
            print(f"t={sim.t}", file=sys.stderr)
            print(render_frame(problem.grid, problem.index, sim.agents, goals), file=sys.stderr)

        on_step = draw

    outcome = run(config, problem, on_step)
    if not outcome.kpis.solved:
        cells = [problem.index.cell(g) for g in outcome.unreachable]
        print(f"unsolvable: unreachable goals {cells}", file=sys.stderr)
    if outcome.lower_bound:
        log.info("initial assignment distances: %s", outcome.lower_bound)
    row = outcome.kpis.to_dict()
    if config.output_format == "csv":
        _write_table([row], KPI_KEYS, "csv", sys.stdout)
    else:
        print(json.dumps(row))
    if outcome.result is not None:
        if args.schedule_out:
            with open(args.schedule_out, "w") as fh:
                outcome.result.schedule.write(fh, problem.index)
        if args.trace:
            with open(args.trace, "w") as fh:
                fh.write("\n".join(outcome.result.trace) + "\n")
    return EXIT_OK if outcome.kpis.solved else EXIT_UNSOLVABLE


def cmd_validate(args) -> int:
    config = _config(args)
    problem = load_problem(config)
    if config.mode is Mode.COMBINATORIAL:
        starts, goals = combinatorial_goals(problem, config)
    else:
        entries = problem.entries if config.agents is None else problem.entries[:config.agents]
        starts = [problem.index.node(e.start) for e in entries]
        goals = [problem.index.node(e.goal) for e in entries]
    inst = Instance(problem.graph, starts, goals, config.mode)
    with open(args.schedule) as fh:
        schedule = Schedule.read(fh, problem.index)
    report = validate(schedule, problem.graph, inst)
    print(json.dumps({
        "ok": report.ok,
        "counts": report.counts(),
        "violations": [
            {"time": v.time, "kind": v.kind.value, "agents": list(v.agents),
             "goal": None if v.goal is None else list(problem.index.cell(v.goal))}
            for v in report.violations[:100]
        ],
    }))
    return EXIT_OK if report.ok else EXIT_ERROR


def discover(directory: Path) -> list[tuple[str, Path, Path]]:
    """(instance id, map path, scen path) for every scenario under ``directory``."""
    found = []
    for scen in sorted(directory.rglob("*.scen")):
        map_name = None
        with open(scen, encoding="utf-8") as fh:
            for line in fh:
                cols = line.rstrip("\r\n").split("\t")
                if len(cols) >= 8:
                    map_name = Path(cols[1]).name
                    break
        candidates = [scen.parent / map_name, directory / map_name] if map_name else []
        candidates.append(scen.with_suffix(".map"))
        map_path = next((c for c in candidates if c.exists()), candidates[0])
        found.append((str(scen.relative_to(directory)), map_path, scen))
    return found


def bench_one(job) -> dict:
    name, map_path, scen_path, config = job
    row = {"instance": name, "mode": config.mode.value, "error": ""}
    t0 = time.perf_counter()
    try:
        outcome = run(RunConfig(**{**config.__dict__, "map": map_path, "scen": scen_path}))
        row.update(outcome.kpis.to_dict())
        lb = outcome.lower_bound or {}
        row["lb_sum_of_cost"] = lb.get("sum_of_cost", "")
        row["lb_makespan"] = lb.get("makespan", "")
        if not outcome.kpis.solved:
            row["error"] = "unsolvable"
    except (OSError, MapFormatError, ValueError, SimulationError, TimeLimitExceeded,
            ValidationFailure) as exc:
        row.update({k: "" for k in KPI_KEYS})
        row["solved"] = False
        row["lb_sum_of_cost"] = row["lb_makespan"] = ""
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_time"] = round(time.perf_counter() - t0, 4)
    return row


def summarize(rows: list[dict]) -> dict:
    summary: dict = {}
    for mode in sorted({r["mode"] for r in rows}):
        ok = [r for r in rows if r["mode"] == mode and r["solved"] is True]
        entry = {"instances": sum(r["mode"] == mode for r in rows), "solved": len(ok)}
        for key in ("sum_of_cost", "makespan", "conflicts_potential", "conflicts_resolved", "wall_time"):
            vals = [r[key] for r in ok if r.get(key, "") != ""]
            if vals:
                entry[key] = {"mean": statistics.fmean(vals), "median": statistics.median(vals),
                              "max": max(vals)}
        summary[mode] = entry
    by_inst: dict[str, dict] = {}
    for r in rows:
        by_inst.setdefault(r["instance"], {})[r["mode"]] = r
    ratios = []
    for name, modes in sorted(by_inst.items()):
        reg, ano = modes.get("regular"), modes.get("anonymous")
        if not (reg and ano and reg["solved"] is True and ano["solved"] is True):
            continue
        ratios.append({
            "instance": name,
            "sum_of_cost": reg["lb_sum_of_cost"] / max(ano["sum_of_cost"], 1),
            "makespan": reg["lb_makespan"] / max(ano["makespan"], 1),
            "conflicts_potential": reg["conflicts_potential"] / max(ano["conflicts_potential"], 1),
        })
    if ratios:
        summary["regular_vs_anonymous"] = {
            key: statistics.median(r[key] for r in ratios)
            for key in ("sum_of_cost", "makespan", "conflicts_potential")
        }
        summary["regular_vs_anonymous"]["per_instance"] = ratios
    return summary


def cmd_bench(args) -> int:
    directory = args.directory or os.environ.get(BENCH_ENV)
    if not directory:
        print(f"no benchmark directory given and ${BENCH_ENV} unset", file=sys.stderr)
        return EXIT_ERROR
    directory = Path(directory)
    modes = [m.strip() for m in args.mode.split(",")]
    jobs = []
    for name, map_path, scen_path in discover(directory):
        for mode in modes:
            cfg = _config(args, mode=mode, map=None, scen=None)
            jobs.append((name, map_path, scen_path, cfg))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(bench_one, jobs))
    else:
        rows = [bench_one(j) for j in jobs]
    keys = [k for k in ROW_KEYS if not (args.no_timing and k == "wall_time")]
    if args.no_timing:
        for r in rows:
            r.pop("wall_time", None)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if args.output_format == "csv":
            _write_table(rows, keys, "csv", out)
        else:
            json.dump({"rows": rows, "summary": summarize(rows)}, out, indent=2)
            out.write("\n")
    finally:
        if args.out:
            out.close()
    if args.output_format == "csv" and rows:
        print(json.dumps({k: v for k, v in summarize(rows).items()}, indent=2), file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polymapf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    _add_run_flags(p)
    p.add_argument("--output-format", choices=["json", "csv"], default="json")
    p.add_argument("--render", action="store_true", help="draw every timestep to stderr")
    p.add_argument("--schedule-out", type=Path, help="write the schedule as t,agent,x,y")
    p.add_argument("--trace", type=Path, help="write the per-timestep trace")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="check a schedule file against an instance")
    _add_run_flags(p)
    p.add_argument("--schedule", type=Path, required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="sweep a directory of map/scen pairs")
    p.add_argument("directory", nargs="?", type=Path, help=f"default: ${BENCH_ENV}")
    _add_run_flags(p, need_files=False)
    p.set_defaults(mode="anonymous")
    for action in p._actions:
        if action.dest == "mode":
            action.choices = None
            action.help = "mode or comma-separated modes, e.g. regular,anonymous"
    p.add_argument("--output-format", choices=["json", "csv"], default="csv")
    p.add_argument("--out", type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="omit wall_time (byte-stable output)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, MapFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SimulationError, ValidationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        for line in getattr(exc, "trace", [])[-50:]:
            print(line, file=sys.stderr)
        return EXIT_ERROR
    except TimeLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
