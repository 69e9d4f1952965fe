"""Schedule validation and KPIs.

Kept independent of the simulator: only plain position sequences and the
graph are inspected here.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .map_io import Graph, Instance, Mode


class ScheduleMismatch(ValueError):
    pass


class ViolationKind(str, enum.Enum):
    VERTEX = "vertex"
    EDGE_SWAP = "edge_swap"
    TELEPORT = "teleport"
    GOAL_UNVISITED = "goal_unvisited"


@dataclass(frozen=True)
class Violation:
    time: int
    kind: ViolationKind
    agents: tuple[int, ...] = ()
    goal: int | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def counts(self) -> dict[str, int]:
        out = {k.value: 0 for k in ViolationKind}
        for v in self.violations:
            out[v.kind.value] += 1
        return out


KPI_KEYS = ("sum_of_cost", "makespan", "conflicts_resolved", "conflicts_potential", "timesteps", "solved")


@dataclass(frozen=True)
class KpiReport:
    sum_of_cost: int
    makespan: int
    conflicts_resolved: int
    conflicts_potential: int
    timesteps: int
    solved: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in KPI_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def unsolved(cls) -> "KpiReport":
        return cls(0, 0, 0, 0, 0, False)


def _paths(schedule) -> list[list[int]]:
    paths = getattr(schedule, "paths", schedule)
    return [list(map(int, p)) for p in paths]


def validate(schedule, graph: Graph, instance: Instance) -> ValidationReport:
    paths = _paths(schedule)
    if len(paths) != instance.k:
        raise ScheduleMismatch(f"schedule has {len(paths)} agents, instance has {instance.k}")
    if any(len(p) == 0 for p in paths):
        raise ScheduleMismatch("every agent needs at least one position")
    T = max(len(p) for p in paths)
    at = [p + [p[-1]] * (T - len(p)) for p in paths]
    report = ValidationReport()
    add = report.violations.append

    for i, p in enumerate(at):
        if p[0] != instance.starts[i]:
            add(Violation(0, ViolationKind.TELEPORT, (i,)))
    for t in range(T):
        seen: dict[int, list[int]] = {}
        for i in range(len(at)):
            seen.setdefault(at[i][t], []).append(i)
        for v, who in seen.items():
            if len(who) > 1:
                add(Violation(t, ViolationKind.VERTEX, tuple(who)))
        if t == 0:
            continue
        moves: dict[tuple[int, int], int] = {}
        for i in range(len(at)):
            u, v = at[i][t - 1], at[i][t]
            if u == v:
                continue
            if graph.weight(u, v) is None:
                add(Violation(t, ViolationKind.TELEPORT, (i,)))
            moves[(u, v)] = i
        for (u, v), i in moves.items():
            j = moves.get((v, u))
            if j is not None and i < j:
                add(Violation(t, ViolationKind.EDGE_SWAP, (i, j)))

    if instance.mode is Mode.COMBINATORIAL:
        occupied = {v for p in at for v in p}
        missing = [g for g in instance.goals if g not in occupied]
        last_t = T - 1
    else:
        final = {p[-1] for p in at}
        missing = [g for g in instance.goals if g not in final]
        last_t = T - 1
    for g in missing:
        add(Violation(last_t, ViolationKind.GOAL_UNVISITED, (), g))
    return report


def agent_costs(schedule, graph: Graph) -> list[int]:
    """Travel cost per agent: move weights plus charged waits.

    A wait is charged while the agent is still under way. With a resting
    mask (who was done when), waits at a resting spot are free even if the
    agent is pushed on later; without one, waits after the last move are free.
    """
    paths = _paths(schedule)
    resting = getattr(schedule, "resting", None)
    costs = []
    for i, p in enumerate(paths):
        last_move = 0
        for t in range(1, len(p)):
            if p[t] != p[t - 1]:
                last_move = t
        c = 0
        for t in range(1, last_move + 1):
            u, v = p[t - 1], p[t]
            if u != v:
                w = graph.weight(u, v)
                if w is None:
                    raise ScheduleMismatch(f"agent {i} jumps {u}->{v} at t={t}")
                c += w
            elif resting is None or not resting[i][t - 1]:
                c += graph.wait_cost
        costs.append(c)
    return costs


def compute_kpis(
    schedule,
    graph: Graph,
    log=(),
    conflicts_potential: int = 0,
    solved: bool = True,
) -> KpiReport:
    paths = _paths(schedule)
    costs = agent_costs(schedule, graph)
    T = max((len(p) for p in paths), default=1)
    return KpiReport(
        sum_of_cost=int(sum(costs)),
        makespan=int(max(costs, default=0)),
        conflicts_resolved=len(log),
        conflicts_potential=int(conflicts_potential),
        timesteps=T - 1,
        solved=bool(solved),
    )
