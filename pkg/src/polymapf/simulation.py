"""Discrete-time execution of agent agendas with on-the-fly conflict resolution.

Every agent carries a non-empty agenda; its last entry is the node the agent
rests on once everything else is visited. An agent is done when only that
entry is left and it stands on it. All conflict handling exchanges agendas
between agents (together with the trees they imply), so the multiset of
agenda entries is never changed by a resolution:

* cuckoo'ing     -- an agent stepping onto a done agent's node takes over the
                    done agent's agenda, the done agent takes the incomer's;
* edge conflicts -- two agents pointing at each other swap agendas;
* node conflicts -- two agents heading into one node swap agendas when that
                    shortens their combined remaining distance; three or more
                    are reassigned by a local assignment problem;
* zipping        -- whoever still contends for a node after that takes turns;
                    losers wait and so does everyone depending on them.

Within a step all decisions read the configuration at the start of the step
and moves commit together. Each committed move follows a shortest-path
pointer and each exchange never increases the summed remaining agenda
length, which bounds the number of steps by that sum.
"""

from __future__ import annotations

import enum
import time as _time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .assignment import solve_sum
from .map_io import Graph, GridIndex
from .shortest_paths import INF, TreeCache


class SimulationError(RuntimeError):
    def __init__(self, message: str, trace: list[str] | None = None):
        super().__init__(message)
        self.trace = trace or []


class TimeLimitExceeded(RuntimeError):
    pass


class ConflictKind(str, enum.Enum):
    EDGE_SWAP = "edge_swap"
    NODE_HEAD_ON = "node_head_on"
    NODE_SAME_DIRECTION = "node_same_direction"
    NODE_MULTI = "node_multi"
    GOAL_BLOCK = "goal_block"


class Resolution(str, enum.Enum):
    AGENDA_SWAP = "agenda_swap"
    ZIP = "zip"
    LOCAL_ASSIGNMENT = "local_assignment"
    CUCKOO = "cuckoo"
    WAIT = "wait"


class Status(str, enum.Enum):
    MOVING = "moving"
    WAITING = "waiting"
    DONE = "done"


@dataclass
class AgentState:
    id: int
    position: int
    agenda: list[int]
    waits: int = 0  # consecutive waiting steps while not done
    intended_next: int | None = None
    action: str = "wait"

    def __post_init__(self):
        if not self.agenda:
            self.agenda = [self.position]
        self.agenda = [int(g) for g in self.agenda]

    @property
    def head(self) -> int:
        return self.agenda[0]

    @property
    def done(self) -> bool:
        return len(self.agenda) == 1 and self.position == self.agenda[0]

    @property
    def status(self) -> Status:
        if self.done:
            return Status.DONE
        return Status.WAITING if self.waits else Status.MOVING


@dataclass(frozen=True)
class ConflictEvent:
    time: int
    kind: ConflictKind
    agents: tuple[int, ...]
    resolution: Resolution


@dataclass
class Schedule:
    """Per-agent node sequence, one entry per timestep from t = 0."""

    paths: list[list[int]]
    resting: list[list[bool]] | None = None  # agent was done at that timestep

    @property
    def k(self) -> int:
        return len(self.paths)

    @property
    def length(self) -> int:
        return max((len(p) for p in self.paths), default=0)

    def position(self, agent: int, t: int) -> int:
        p = self.paths[agent]
        return p[min(t, len(p) - 1)]

    def to_rows(self, index: GridIndex | None = None) -> list[tuple[int, int, int, int]]:
        rows = []
        for t in range(self.length):
            for i in range(self.k):
                v = self.position(i, t)
                x, y = index.cell(v) if index is not None else (v, 0)
                rows.append((t, i, x, y))
        return rows

    def write(self, fh, index: GridIndex | None = None) -> None:
        fh.write("t,agent,x,y\n")
        for t, i, x, y in self.to_rows(index):
            fh.write(f"{t},{i},{x},{y}\n")

    @classmethod
    def read(cls, fh, index: GridIndex | None = None) -> "Schedule":
        entries: dict[int, dict[int, int]] = defaultdict(dict)
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("t,"):
                continue
            try:
                t, i, x, y = (int(c) for c in line.split(","))
            except ValueError:
                raise ValueError(f"line {lineno}: expected 't,agent,x,y'") from None
            entries[i][t] = index.node((x, y)) if index is not None else x
        paths = []
        for i in range(len(entries)):
            if i not in entries:
                raise ValueError(f"agent {i} missing from schedule")
            ts = entries[i]
            if sorted(ts) != list(range(len(ts))):
                raise ValueError(f"agent {i} has gaps in its timesteps")
            paths.append([ts[t] for t in range(len(ts))])
        return cls(paths)


class DependencyGraph:
    """Agent -> agent edges: the source waits whenever its target waits."""

    def __init__(self):
        self.edges: dict[int, int] = {}
        self.dependents: dict[int, list[int]] = defaultdict(list)

    def add(self, a: int, b: int) -> None:
        self.edges[a] = b
        self.dependents[b].append(a)

    def cycles(self) -> list[list[int]]:
        color: dict[int, int] = {}
        found = []
        for start in sorted(self.edges):
            if start in color:
                continue
            path, pos = [], {}
            v = start
            while v is not None and v not in color:
                color[v] = 1
                pos[v] = len(path)
                path.append(v)
                v = self.edges.get(v)
            if v is not None and color.get(v) == 1 and v in pos:
                found.append(path[pos[v]:])
            for u in path:
                color[u] = 2
        return found


@dataclass
class SimulationResult:
    schedule: Schedule
    log: list[ConflictEvent]
    potential_conflicts: int
    timesteps: int
    bound: int
    stalled_steps: int = 0
    trace: list[str] = field(default_factory=list)
    visited: list[int] = field(default_factory=list)  # agenda goals in the order reached

    @property
    def conflicts_resolved(self) -> int:
        return len(self.log)


def make_agents(starts: Sequence[int], agendas: Sequence[Sequence[int]]) -> list[AgentState]:
    return [AgentState(i, int(s), list(a)) for i, (s, a) in enumerate(zip(starts, agendas))]


def refresh(agent: AgentState, trees: TreeCache) -> None:
    """Drop reached agenda heads and recompute ``intended_next``."""
    while len(agent.agenda) > 1 and agent.position == agent.agenda[0]:
        agent.agenda.pop(0)
    if agent.position == agent.agenda[0]:
        agent.intended_next = None
        return
    tree = trees[agent.head]
    if tree.dist[agent.position] >= INF:
        raise SimulationError(f"agent {agent.id} at {agent.position} cannot reach {agent.head}")
    agent.intended_next = int(tree.parent[agent.position])


def _exchange(a: AgentState, b: AgentState, trees: TreeCache) -> None:
    a.agenda, b.agenda = b.agenda, a.agenda
    refresh(a, trees)
    refresh(b, trees)


def _leg(trees: TreeCache, pos: int, head: int) -> int:
    return int(trees[head].dist[pos])


def resolve_edge_conflict(a: AgentState, b: AgentState, trees: TreeCache) -> None:
    """Two agents about to cross one edge swap agendas and keep going."""
    if a.intended_next != b.position or b.intended_next != a.position:
        raise ValueError("agents do not point at each other")
    _exchange(a, b, trees)
    a.action = b.action = "swap"


def swap_gain(a: AgentState, b: AgentState, trees: TreeCache) -> int:
    before = _leg(trees, a.position, a.head) + _leg(trees, b.position, b.head)
    after = _leg(trees, a.position, b.head) + _leg(trees, b.position, a.head)
    return before - after


def resolve_node_headon(a: AgentState, b: AgentState, trees: TreeCache) -> bool:
    """Swap agendas of two agents heading into one node if that shortens the
    pair's remaining travel (their paths run through each other's side)."""
    if swap_gain(a, b, trees) > 0:
        _exchange(a, b, trees)
        a.action = b.action = "swap"
        return True
    return False


def resolve_node_multi(agents: Sequence[AgentState], trees: TreeCache) -> bool:
    """Reassign agenda heads among conflicting agents by a local assignment.

    Applied only when strictly better than the current assignment.
    """
    heads = [a.head for a in agents]
    cost = np.array([[_leg(trees, a.position, h) for h in heads] for a in agents], dtype=np.int64)
    current = int(sum(cost[i, i] for i in range(len(agents))))
    sol = solve_sum(cost)
    if sol.total >= current:
        return False
    agendas = [a.agenda for a in agents]
    for a, j in zip(agents, sol.perm):
        a.agenda = agendas[j]
    for a in agents:
        refresh(a, trees)
        a.action = "swap"
    return True


def cuckoo(resident: AgentState, incomer: AgentState, trees: TreeCache) -> None:
    """Push a done agent off its node: the incomer takes over its resting
    spot, the resident leaves carrying the incomer's agenda."""
    if not resident.done or incomer.intended_next != resident.position:
        raise ValueError("cuckoo needs a done resident on the incomer's next node")
    _exchange(resident, incomer, trees)
    resident.action = incomer.action = "cuckoo"


def zip_and_propagate(roots: Iterable[int], deps: DependencyGraph) -> set[int]:
    """All agents that must wait: the roots plus everything depending on them,
    found by walking the inverted dependency graph once."""
    waiting: set[int] = set()
    queue = deque()
    for r in roots:
        if r not in waiting:
            waiting.add(r)
            queue.append(r)
    while queue:
        b = queue.popleft()
        for a in deps.dependents.get(b, ()):
            if a not in waiting:
                waiting.add(a)
                queue.append(a)
    return waiting


def _diagonal_cross(graph: Graph, a: AgentState, b: AgentState) -> bool:
    if graph.coords is None:
        return False
    ax0, ay0 = graph.coords[a.position]
    ax1, ay1 = graph.coords[a.intended_next]
    bx0, by0 = graph.coords[b.position]
    bx1, by1 = graph.coords[b.intended_next]
    if abs(ax1 - ax0) != 1 or abs(ay1 - ay0) != 1 or abs(bx1 - bx0) != 1 or abs(by1 - by0) != 1:
        return False
    if {(ax0, ay0), (ax1, ay1)} == {(bx0, by0), (bx1, by1)}:
        return False
    return {ax0, ax1} == {bx0, bx1} and {ay0, ay1} == {by0, by1}


class Simulator:
    def __init__(
        self,
        graph: Graph,
        agents: list[AgentState],
        trees: TreeCache,
        index: GridIndex | None = None,
        record_trace: bool = False,
        time_limit: float | None = None,
    ):
        self.graph = graph
        self.agents = agents
        self.trees = trees
        self.index = index
        self.record_trace = record_trace
        self.deadline = None if time_limit is None else _time.monotonic() + time_limit
        self.t = 0
        self.log: list[ConflictEvent] = []
        self.potential = 0
        self.stalled = 0
        self.turn: dict[int, int] = defaultdict(int)
        self.trace: list[str] = []
        self.visited: list[int] = []
        if len({a.position for a in agents}) != len(agents):
            raise SimulationError("agents must start on distinct nodes")
        for a in agents:
            refresh(a, trees)
        self.bound = self._bound()
        self.paths = [[a.position] for a in agents]
        self.resting = [[a.done] for a in agents]
        self._emit_trace()

    def _bound(self) -> int:
        total = 0
        for a in self.agents:
            pos = a.position
            for g in a.agenda:
                d = _leg(self.trees, pos, g)
                if d >= INF:
                    raise SimulationError(f"agent {a.id} cannot reach agenda entry {g}")
                total += d
                pos = g
        return 2 * total + len(self.agents) * self.graph.n

    def _event(self, kind, agents, resolution):
        self.log.append(ConflictEvent(self.t, kind, tuple(sorted(agents)), resolution))

    def _emit_trace(self):
        if not self.record_trace:
            return
        for a in self.agents:
            x, y = self.index.cell(a.position) if self.index is not None else (a.position, 0)
            self.trace.append(f"t {self.t} agent {a.id} at {x},{y} {a.action}")

    def _count_potential(self, active, occ) -> int:
        count = 0
        wanters = defaultdict(int)
        for a in active:
            wanters[a.intended_next] += 1
            b = occ.get(a.intended_next)
            if b is None:
                continue
            if b.done:
                count += 1
            elif b.intended_next == a.position and a.id < b.id:
                count += 1
        return count + sum(1 for c in wanters.values() if c > 1)

    def _resolve_exchanges(self, active, occ) -> None:
        trees = self.trees
        while True:
            # goal blocks first: cascade through chains of done agents
            queue = deque(sorted(active, key=lambda a: a.id))
            while queue:
                a = queue.popleft()
                if a.done:
                    continue
                b = occ.get(a.intended_next)
                if b is not None and b.done:
                    cuckoo(b, a, trees)
                    self._event(ConflictKind.GOAL_BLOCK, (a.id, b.id), Resolution.CUCKOO)
                    queue.append(b)
            active = [a for a in self.agents if not a.done]

            changed = False
            for a in active:
                if a.done:
                    continue
                b = occ.get(a.intended_next)
                if b is not None and not b.done and b.intended_next == a.position:
                    resolve_edge_conflict(a, b, trees)
                    self._event(ConflictKind.EDGE_SWAP, (a.id, b.id), Resolution.AGENDA_SWAP)
                    changed = True
            if changed:
                active = [a for a in self.agents if not a.done]
                continue

            wanters = defaultdict(list)
            for a in active:
                wanters[a.intended_next].append(a)
            for v in sorted(wanters):
                group = wanters[v]
                if len(group) == 2:
                    if resolve_node_headon(group[0], group[1], trees):
                        self._event(ConflictKind.NODE_HEAD_ON, (g.id for g in group),
                                    Resolution.AGENDA_SWAP)
                        changed = True
                        break
                elif len(group) > 2:
                    if resolve_node_multi(group, trees):
                        self._event(ConflictKind.NODE_MULTI, (g.id for g in group),
                                    Resolution.LOCAL_ASSIGNMENT)
                        changed = True
                        break
            if not changed:
                return
            active = [a for a in self.agents if not a.done]

    def _pick_winner(self, node: int, group: list[AgentState], in_cycle: set[int]) -> AgentState:
        for a in group:
            if a.id in in_cycle:
                return a
        order = sorted(group, key=lambda a: a.id)
        r = self.turn[node] % len(order)
        self.turn[node] += 1
        order = order[r:] + order[:r]
        most = max(a.waits for a in order)
        return next(a for a in order if a.waits == most)

    def _find_crossing(self, active, waiting):
        # two diagonal moves can only cross inside the same 2x2 square
        coords = self.graph.coords
        squares: dict[tuple[int, int], list[AgentState]] = {}
        for a in active:
            if a.id in waiting or a.intended_next is None:
                continue
            x0, y0 = coords[a.position]
            x1, y1 = coords[a.intended_next]
            if x0 == x1 or y0 == y1:
                continue
            key = (int(min(x0, x1)), int(min(y0, y1)))
            for b in squares.get(key, ()):
                if _diagonal_cross(self.graph, b, a):
                    return b, a
            squares.setdefault(key, []).append(a)
        return None

    def step(self) -> bool:
        """Advance one timestep; returns False once every agent is done."""
        if self.deadline is not None and _time.monotonic() > self.deadline:
            raise TimeLimitExceeded(f"time limit hit at t={self.t}")
        for a in self.agents:
            a.action = "wait"
        active = [a for a in self.agents if not a.done]
        if not active:
            return False
        occ = {a.position: a for a in self.agents}
        self.potential += self._count_potential(active, occ)
        self._resolve_exchanges(active, occ)
        active = [a for a in self.agents if not a.done]
        if not active:
            self._commit(set())
            return True

        deps = DependencyGraph()
        wanters = defaultdict(list)
        for a in active:
            wanters[a.intended_next].append(a)
            b = occ.get(a.intended_next)
            if b is not None:
                deps.add(a.id, b.id)
        roots: set[int] = set()
        in_cycle: set[int] = set()
        for cyc in deps.cycles():
            if len(cyc) >= 3:
                in_cycle.update(cyc)
            else:
                roots.update(cyc)  # a 2-cycle is a swap; exchanges remove these
        for v in sorted(wanters):
            group = wanters[v]
            if len(group) < 2:
                continue
            winner = self._pick_winner(v, group, in_cycle)
            losers = [a for a in group if a is not winner]
            for a in losers:
                a.action = "zip"
            roots.update(a.id for a in losers)
            kind = ConflictKind.NODE_SAME_DIRECTION if len(group) == 2 else ConflictKind.NODE_MULTI
            self._event(kind, (a.id for a in group), Resolution.ZIP)
        waiting = zip_and_propagate(roots, deps)

        if self.graph.coords is not None:
            while True:
                veto = self._find_crossing(active, waiting)
                if veto is None:
                    break
                a, b = veto
                loser = b if (b.waits, -b.id) < (a.waits, -a.id) else a
                self._event(ConflictKind.EDGE_SWAP, (a.id, b.id), Resolution.WAIT)
                waiting = zip_and_propagate(roots | waiting | {loser.id}, deps)

        movers = {a.id for a in active if a.id not in waiting}
        self._commit(movers)
        return True

    def _commit(self, movers: set[int]) -> None:
        if not movers and any(not a.done for a in self.agents):
            self.stalled += 1
        for a in self.agents:
            if a.id in movers:
                a.position = a.intended_next
                a.waits = 0
                if a.action == "wait":
                    a.action = "move"
            elif not a.done:
                a.waits += 1
        self.t += 1
        positions = [a.position for a in self.agents]
        if len(set(positions)) != len(positions):
            raise SimulationError(f"vertex conflict committed at t={self.t}", self.trace)
        for a in self.agents:
            before = len(a.agenda)
            head = a.agenda[0]
            refresh(a, self.trees)
            if len(a.agenda) < before or (a.done and a.id in movers):
                self.visited.append(head)
        for i, a in enumerate(self.agents):
            self.paths[i].append(a.position)
            self.resting[i].append(a.done)
        self._emit_trace()
        if self.t > self.bound:
            raise SimulationError(
                f"termination bound {self.bound} exceeded", self.trace or self._dump()
            )

    def _dump(self) -> list[str]:
        return [f"agent {a.id} at {a.position} agenda {a.agenda}" for a in self.agents]

    def run(self) -> SimulationResult:
        while self.step():
            pass
        # trim trailing steps in which nothing moved
        T = len(self.paths[0])
        while T > 1 and all(p[T - 1] == p[T - 2] for p in self.paths):
            T -= 1
        paths = [p[:T] for p in self.paths]
        resting = [r[:T] for r in self.resting]
        return SimulationResult(
            Schedule(paths, resting), self.log, self.potential, T - 1, self.bound,
            self.stalled, self.trace, self.visited,
        )


def simulate(
    graph: Graph,
    agents: list[AgentState],
    trees: TreeCache | None = None,
    index: GridIndex | None = None,
    record_trace: bool = False,
    time_limit: float | None = None,
) -> SimulationResult:
    """Run all agents to completion and return the collision-free schedule."""
    trees = trees if trees is not None else TreeCache(graph)
    return Simulator(graph, agents, trees, index, record_trace, time_limit).run()


def count_potential_conflicts(graph: Graph, agents: list[AgentState], trees: TreeCache | None = None) -> int:
    """Number of conflict events logged by a full simulation of ``agents``."""
    return simulate(graph, agents, trees).conflicts_resolved


_ARROWS = {(1, 0): "→", (-1, 0): "←", (0, 1): "↓", (0, -1): "↑",
           (1, 1): "↘", (-1, 1): "↙", (1, -1): "↗", (-1, -1): "↖"}


def render_frame(grid, index: GridIndex, agents: Sequence[AgentState], goals: Iterable[int] = ()) -> str:
    """Terminal snapshot: walls X, goals *, agents as arrows toward their next node."""
    rows = [["X" if not grid.passable[y, x] else " " for x in range(grid.width)]
            for y in range(grid.height)]
    for g in goals:
        x, y = index.cell(g)
        rows[y][x] = "*"
    for a in agents:
        x, y = index.cell(a.position)
        if a.intended_next is None:
            rows[y][x] = "●"
        else:
            nx, ny = index.cell(a.intended_next)
            rows[y][x] = _ARROWS.get((nx - x, ny - y), "?")
    return "\n".join("".join(r) for r in rows)
