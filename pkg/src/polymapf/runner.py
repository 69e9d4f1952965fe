"""Regular / anonymous / combinatorial pipelines over MovingAI instances."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .assignment import solve_bottleneck, solve_sum
from .map_io import (
    Connectivity, Graph, GridIndex, GridMap, Instance, Mode, ScenarioEntry, build_graph,
    connected_components, read_map_file, read_scenario_file, screen_solvability,
)
from .nrpa import item_distances, search, seed_policy, split_tour
from .shortest_paths import TreeCache, distance_matrix
from .simulation import SimulationResult, Simulator, make_agents
from .validate import KpiReport, ValidationReport, compute_kpis, validate

log = logging.getLogger(__name__)


class ValidationFailure(RuntimeError):
    def __init__(self, report: ValidationReport, trace: list[str]):
        super().__init__(f"schedule failed validation: {report.counts()}")
        self.report = report
        self.trace = trace


@dataclass
class RunConfig:
    map: Path | None = None
    scen: Path | None = None
    mode: Mode = Mode.ANONYMOUS
    connectivity: Connectivity = Connectivity.FOUR
    objective: str = "sum"  # or "bottleneck"
    agents: int | None = None  # k; default: every scenario row
    goals: int | None = None  # m (combinatorial); default: every goal cell
    nrpa_level: int = 3
    nrpa_iterations: int = 30
    seed: int = 0
    output_format: str = "json"
    render: bool = False
    time_limit: float = 1800.0
    starts_are_goals: bool = False
    trace: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.connectivity = Connectivity(self.connectivity)
        if self.objective not in ("sum", "bottleneck"):
            raise ValueError(f"objective must be 'sum' or 'bottleneck', not {self.objective!r}")
        if self.agents is not None and self.agents < 1:
            raise ValueError("agents must be >= 1")
        if self.nrpa_level < 0 or self.nrpa_iterations < 1:
            raise ValueError("nrpa level must be >= 0 and iterations >= 1")
        if (self.mode is Mode.COMBINATORIAL and self.goals is not None
                and self.agents is not None and self.goals < self.agents):
            raise ValueError("combinatorial mode needs goals >= agents")


@dataclass
class Problem:
    grid: GridMap | None
    graph: Graph
    index: GridIndex | None
    entries: list[ScenarioEntry]


@dataclass
class RunOutcome:
    kpis: KpiReport
    instance: Instance | None = None
    result: SimulationResult | None = None
    validation: ValidationReport | None = None
    lower_bound: dict | None = None  # fixed/initial assignment distances
    unreachable: tuple[int, ...] = ()
    agendas: list[list[int]] | None = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


def load_problem(config: RunConfig) -> Problem:
    grid = read_map_file(config.map)
    entries = read_scenario_file(config.scen, grid)
    graph, index = build_graph(grid, config.connectivity)
    return Problem(grid, graph, index, entries)


def _pairs(problem: Problem, k: int | None):
    entries = problem.entries if k is None else problem.entries[:k]
    if k is not None and len(entries) < k:
        raise ValueError(f"scenario has {len(problem.entries)} rows, {k} agents requested")
    starts = [problem.index.node(e.start) for e in entries]
    goals = [problem.index.node(e.goal) for e in entries]
    return starts, goals


def _finish(instance: Instance, agendas, trees: TreeCache, config: RunConfig,
            index: GridIndex | None, t0: float, on_step: Callable | None = None) -> RunOutcome:
    agents = make_agents(instance.starts, agendas)
    remaining = None if config.time_limit is None else max(config.time_limit - (time.perf_counter() - t0), 0.0)
    sim = Simulator(instance.graph, agents, trees, index, record_trace=config.trace, time_limit=remaining)
    if on_step is None:
        result = sim.run()
    else:
        on_step(sim)
        while sim.step():
            on_step(sim)
        result = sim.run()
    report = validate(result.schedule, instance.graph, instance)
    if not report.ok:
        raise ValidationFailure(report, result.trace)
    kpis = compute_kpis(result.schedule, instance.graph, result.log, result.potential_conflicts)
    return RunOutcome(kpis, instance, result, report, agendas=[list(a) for a in agendas],
                      wall_time=time.perf_counter() - t0)


def _unsolvable(instance: Instance, screening, t0: float) -> RunOutcome:
    return RunOutcome(KpiReport.unsolved(), instance, unreachable=screening.unreachable_goals,
                      wall_time=time.perf_counter() - t0)


def run_regular(config: RunConfig, problem: Problem | None = None, on_step=None) -> RunOutcome:
    """Fixed benchmark assignment as the initial agendas; the simulation may
    still exchange goals on conflicts."""
    t0 = time.perf_counter()
    problem = problem or load_problem(config)
    starts, goals = _pairs(problem, config.agents)
    inst = Instance(problem.graph, starts, goals, Mode.REGULAR, index=problem.index)
    screening = screen_solvability(inst)
    if not screening:
        return _unsolvable(inst, screening, t0)
    trees = TreeCache(problem.graph).warm(goals)
    d = np.array([trees.dist(s, g) for s, g in zip(starts, goals)], dtype=np.int64)
    out = _finish(inst, [[g] for g in goals], trees, config, problem.index, t0, on_step)
    out.lower_bound = {"sum_of_cost": int(d.sum()), "makespan": int(d.max())}
    return out


def run_anonymous(config: RunConfig, problem: Problem | None = None, on_step=None) -> RunOutcome:
    t0 = time.perf_counter()
    problem = problem or load_problem(config)
    starts, goals = _pairs(problem, config.agents)
    inst = Instance(problem.graph, starts, goals, Mode.ANONYMOUS, index=problem.index)
    screening = screen_solvability(inst)
    if not screening:
        return _unsolvable(inst, screening, t0)
    trees = TreeCache(problem.graph).warm(goals)
    costs = distance_matrix(problem.graph, starts, goals, trees)
    solver = solve_bottleneck if config.objective == "bottleneck" else solve_sum
    sol = solver(costs.entries)
    out = _finish(inst, [[goals[j]] for j in sol.perm], trees, config, problem.index, t0, on_step)
    out.lower_bound = {"sum_of_cost": sol.total, "makespan": sol.max_entry}
    return out


def combinatorial_goals(problem: Problem, config: RunConfig) -> tuple[list[int], list[int]]:
    """Starts are the first k goal cells; goal set W excludes them unless
    ``starts_are_goals``."""
    cells: list[int] = []
    seen = set()
    for e in problem.entries:
        v = problem.index.node(e.goal) if problem.index is not None else e.goal
        if v not in seen:
            seen.add(v)
            cells.append(v)
    if config.goals is not None:
        cells = cells[:config.goals]
    k = config.agents if config.agents is not None else 1
    if len(cells) < k:
        raise ValueError(f"only {len(cells)} distinct goal cells for {k} agents")
    starts = cells[:k]
    goals = cells if config.starts_are_goals else cells[k:]
    return starts, goals


def plan_tours(graph: Graph, starts: list[int], goals: list[int], trees: TreeCache,
               config: RunConfig, labels: np.ndarray | None = None) -> list[list[int]]:
    """NRPA tour assignment, solved separately in every connected component."""
    if labels is None:
        labels = connected_components(graph)
    agendas: list[list[int]] = [[] for _ in starts]
    comps = sorted({int(labels[s]) for s in starts})
    for ci, c in enumerate(comps):
        agent_ids = [i for i, s in enumerate(starts) if labels[s] == c]
        comp_goals = [g for g in goals if labels[g] == c]
        if not comp_goals:
            continue
        cs = [starts[i] for i in agent_ids]
        d = item_distances(cs, comp_goals, trees)
        k = len(cs)
        res = search(config.nrpa_level, config.nrpa_iterations, d, k,
                     seed=config.seed + ci, policy=seed_policy(d, k))
        for local, items in enumerate(split_tour(res.tour, k).agendas):
            agendas[agent_ids[local]] = [comp_goals[j - 1] for j in items]
        log.debug("component %d: %d agents, %d goals, tour score %.1f", c, k, len(comp_goals), res.tour.score)
    return agendas


def run_combinatorial(config: RunConfig, problem: Problem | None = None, on_step=None) -> RunOutcome:
    t0 = time.perf_counter()
    problem = problem or load_problem(config)
    starts, goals = combinatorial_goals(problem, config)
    return solve_combinatorial(problem.graph, starts, goals, config, problem.index, t0, on_step)


def solve_combinatorial(graph: Graph, starts: list[int], goals: list[int], config: RunConfig,
                        index: GridIndex | None = None, t0: float | None = None, on_step=None) -> RunOutcome:
    t0 = time.perf_counter() if t0 is None else t0
    inst = Instance(graph, starts, goals, Mode.COMBINATORIAL, index=index)
    labels = connected_components(graph)
    screening = screen_solvability(inst, labels)
    if not screening:
        return _unsolvable(inst, screening, t0)
    trees = TreeCache(graph)
    agendas = plan_tours(graph, starts, goals, trees, config, labels)
    # goals on start cells are visited at t = 0
    start_set = set(starts)
    agendas = [[g for g in a if g not in start_set] for a in agendas]
    out = _finish(inst, agendas, trees, config, index, t0, on_step)
    lb = []
    for s, a in zip(starts, agendas):
        total, at = 0, s
        for g in a:
            total += trees.dist(at, g)
            at = g
        lb.append(total)
    out.lower_bound = {"sum_of_cost": int(sum(lb)), "makespan": int(max(lb, default=0))}
    return out


def solve_anonymous(graph: Graph, starts, goals, objective: str = "sum", trees: TreeCache | None = None,
                    time_limit: float | None = None) -> RunOutcome:
    """Anonymous pipeline on an in-memory graph (no files)."""
    config = RunConfig(objective=objective, time_limit=time_limit)
    t0 = time.perf_counter()
    inst = Instance(graph, starts, goals, Mode.ANONYMOUS)
    screening = screen_solvability(inst)
    if not screening:
        return _unsolvable(inst, screening, t0)
    trees = trees or TreeCache(graph)
    costs = distance_matrix(graph, starts, goals, trees)
    sol = (solve_bottleneck if objective == "bottleneck" else solve_sum)(costs.entries)
    out = _finish(inst, [[goals[j]] for j in sol.perm], trees, config, None, t0)
    out.lower_bound = {"sum_of_cost": sol.total, "makespan": sol.max_entry}
    return out


RUNNERS = {
    Mode.REGULAR: run_regular,
    Mode.ANONYMOUS: run_anonymous,
    Mode.COMBINATORIAL: run_combinatorial,
}


def run(config: RunConfig, problem: Problem | None = None, on_step=None) -> RunOutcome:
    return RUNNERS[config.mode](config, problem, on_step)
