"""MovingAI map/scenario parsing, grid graphs, components and solvability screening."""

from __future__ import annotations

import enum
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components as _cc

PASSABLE_GLYPHS = frozenset(".G")
BLOCKED_GLYPHS = frozenset("@OTW")


class MapFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GraphError(ValueError):
    pass


class InstanceError(ValueError):
    pass


class Connectivity(str, enum.Enum):
    FOUR = "four"
    EIGHT = "eight"


class Mode(str, enum.Enum):
    REGULAR = "regular"
    ANONYMOUS = "anonymous"
    COMBINATORIAL = "combinatorial"


@dataclass(frozen=True, eq=False)
class GridMap:
    width: int
    height: int
    passable: np.ndarray  # bool, shape (height, width), row-major
    type: str = "octile"

    def __post_init__(self):
        if self.passable.shape != (self.height, self.width):
            raise MapFormatError(
                f"cell array shape {self.passable.shape} != ({self.height}, {self.width})"
            )

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.passable, other.passable)
        )

    def is_passable(self, x: int, y: int) -> bool:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"cell ({x}, {y}) outside {self.width}x{self.height} map")
        return bool(self.passable[y, x])

    @property
    def num_passable(self) -> int:
        return int(self.passable.sum())


def _read_text(text: str | TextIO) -> str:
    if not isinstance(text, str):
        text = text.read()
    return text.replace("\r\n", "\n").replace("\r", "\n")


def parse_map(text: str | TextIO) -> GridMap:
    """Parse a MovingAI ``.map`` file (text or open stream)."""
    lines = _read_text(text).split("\n")
    header: dict[str, str] = {}
    i = 0
    while True:
        if i >= len(lines):
            raise MapFormatError("missing 'map' line", i + 1)
        raw = lines[i].strip()
        i += 1
        if not raw:
            continue
        if raw == "map":
            break
        parts = raw.split()
        if len(parts) != 2 or parts[0] not in ("type", "height", "width"):
            raise MapFormatError(f"malformed header line {raw!r}", i)
        header[parts[0]] = parts[1]
    for key in ("height", "width"):
        if key not in header:
            raise MapFormatError(f"header lacks '{key}'", i)
    try:
        height, width = int(header["height"]), int(header["width"])
    except ValueError:
        raise MapFormatError("height/width must be integers", i) from None
    if height <= 0 or width <= 0:
        raise MapFormatError("height and width must be positive", i)

    passable = np.zeros((height, width), dtype=bool)
    for y in range(height):
        lineno = i + y + 1
        if i + y >= len(lines):
            raise MapFormatError(f"expected {height} rows, got {y}", lineno)
        row = lines[i + y]
        if len(row) != width:
            raise MapFormatError(f"row has {len(row)} glyphs, expected {width}", lineno)
        for x, ch in enumerate(row):
            if ch in PASSABLE_GLYPHS:
                passable[y, x] = True
            elif ch not in BLOCKED_GLYPHS:
                raise MapFormatError(f"unknown glyph {ch!r} at column {x}", lineno)
    for extra in lines[i + height:]:
        if extra.strip():
            raise MapFormatError("trailing content after map rows", i + height + 1)
    return GridMap(width, height, passable, header.get("type", "octile"))


def format_map(grid: GridMap) -> str:
    rows = ["".join("." if c else "@" for c in row) for row in grid.passable]
    return "\n".join(
        [f"type {grid.type}", f"height {grid.height}", f"width {grid.width}", "map", *rows]
    ) + "\n"


@dataclass(frozen=True)
class ScenarioEntry:
    start: tuple[int, int]
    goal: tuple[int, int]
    optimal: float | None = None
    bucket: int = 0
    map_name: str = ""


def parse_scenario(text: str | TextIO, grid: GridMap | None = None) -> list[ScenarioEntry]:
    """Parse a MovingAI ``.scen`` file; validates cells against ``grid`` when given."""
    lines = _read_text(text).split("\n")
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        if lineno == 1 and raw.strip().startswith("version"):
            continue
        cols = raw.split("\t") if "\t" in raw else raw.split()
        if len(cols) < 8:
            raise MapFormatError(f"scenario row needs >= 8 columns, got {len(cols)}", lineno)
        try:
            bucket = int(cols[0])
            sx, sy, gx, gy = (int(c) for c in cols[4:8])
            opt = float(cols[8]) if len(cols) > 8 and cols[8].strip() else None
        except ValueError:
            raise MapFormatError("non-numeric scenario field", lineno) from None
        if grid is not None:
            for label, (x, y) in (("start", (sx, sy)), ("goal", (gx, gy))):
                if not (0 <= x < grid.width and 0 <= y < grid.height):
                    raise MapFormatError(f"{label} ({x}, {y}) outside map bounds", lineno)
                if not grid.passable[y, x]:
                    raise MapFormatError(f"{label} ({x}, {y}) on a blocked cell", lineno)
        entries.append(ScenarioEntry((sx, sy), (gx, gy), opt, bucket, cols[1]))
    return entries


@dataclass(eq=False)
class Graph:
    """Undirected weighted graph in CSR form; neighbour lists sorted by node id.

    Waiting is an implicit self-loop of cost ``wait_cost`` on every node.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    wait_cost: int = 1
    coords: np.ndarray | None = None  # (n, 2) array of (x, y) for grid graphs

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int] | tuple[int, int, int]],
        wait_cost: int = 1,
        coords: np.ndarray | None = None,
    ) -> "Graph":
        weight_of: dict[tuple[int, int], int] = {}
        for e in edges:
            u, v = int(e[0]), int(e[1])
            w = int(e[2]) if len(e) > 2 else 1
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
            if u == v:
                raise GraphError("explicit self-loops are not allowed (waiting is implicit)")
            if w < 1 or w > max(n * n, 1):
                raise GraphError(f"edge weight {w} outside [1, n^2]")
            key = (min(u, v), max(u, v))
            if weight_of.get(key, w) != w:
                raise GraphError(f"edge {key} given with conflicting weights")
            weight_of[key] = w
        src = [u for u, v in weight_of] + [v for u, v in weight_of]
        dst = [v for u, v in weight_of] + [u for u, v in weight_of]
        wts = list(weight_of.values()) * 2
        return cls._from_arrays(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                                np.array(wts, dtype=np.int64), wait_cost, coords)

    @classmethod
    def _from_arrays(cls, n, src, dst, wts, wait_cost=1, coords=None) -> "Graph":
        order = np.lexsort((dst, src))
        src, dst, wts = src[order], dst[order], wts[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        if wait_cost < 1:
            raise GraphError("wait_cost must be positive")
        return cls(n, indptr, dst.astype(np.int64), wts.astype(np.int64), wait_cost, coords)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def neighbor_weights(self, u: int) -> np.ndarray:
        return self.weights[self.indptr[u]:self.indptr[u + 1]]

    def weight(self, u: int, v: int) -> int | None:
        """Edge weight, ``wait_cost`` for u == v, ``None`` when not adjacent."""
        if u == v:
            return self.wait_cost
        nb = self.neighbors(u)
        j = int(np.searchsorted(nb, v))
        if j < len(nb) and nb[j] == v:
            return int(self.weights[self.indptr[u] + j])
        return None

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def unit_weight(self) -> bool:
        return bool(np.all(self.weights == 1))

    def edges(self):
        """Undirected edges ``(u, v, w)`` with ``u < v``."""
        for u in range(self.n):
            lo, hi = self.indptr[u], self.indptr[u + 1]
            for v, w in zip(self.indices[lo:hi], self.weights[lo:hi]):
                if u < v:
                    yield u, int(v), int(w)

    def adjacency_lists(self) -> list[list[int]]:
        return [self.neighbors(u).tolist() for u in range(self.n)]


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Cell <-> node mapping for a grid graph (nodes numbered row-major)."""

    node_of: np.ndarray  # (height, width) int64, -1 for blocked cells
    cells: np.ndarray  # (n, 2) int64 of (x, y)

    def node(self, cell: tuple[int, int]) -> int:
        x, y = cell
        v = int(self.node_of[y, x])
        if v < 0:
            raise InstanceError(f"cell {cell} is blocked")
        return v

    def cell(self, node: int) -> tuple[int, int]:
        x, y = self.cells[node]
        return int(x), int(y)


def build_graph(grid: GridMap, connectivity: Connectivity | str = Connectivity.FOUR) -> tuple[Graph, GridIndex]:
    connectivity = Connectivity(connectivity)
    H, W = grid.height, grid.width
    P = grid.passable
    node_of = np.full((H, W), -1, dtype=np.int64)
    ys, xs = np.nonzero(P)
    n = len(ys)
    node_of[ys, xs] = np.arange(n)
    cells = np.stack([xs, ys], axis=1).astype(np.int64)

    src, dst = [], []

    def link(dy, dx, extra=None):
        # cells (y, x) -> (y+dy, x+dx); both passable, and corner cells for diagonals
        y0, y1 = max(0, -dy), H - max(0, dy)
        x0, x1 = max(0, -dx), W - max(0, dx)
        a = P[y0:y1, x0:x1]
        b = P[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        ok = a & b
        if extra:
            ok = ok & P[y0 + dy:y1 + dy, x0:x1] & P[y0:y1, x0 + dx:x1 + dx]
        yy, xx = np.nonzero(ok)
        yy, xx = yy + y0, xx + x0
        u = node_of[yy, xx]
        v = node_of[yy + dy, xx + dx]
        src.extend([u, v])
        dst.extend([v, u])

    link(0, 1)
    link(1, 0)
    if connectivity is Connectivity.EIGHT:
        link(1, 1, extra=True)
        link(1, -1, extra=True)
    if src:
        s = np.concatenate(src)
        d = np.concatenate(dst)
    else:
        s = d = np.zeros(0, dtype=np.int64)
    graph = Graph._from_arrays(n, s, d, np.ones(len(s), dtype=np.int64), 1, cells)
    return graph, GridIndex(node_of, cells)


def connected_components(graph: Graph) -> np.ndarray:
    """Component label per node (labels are 0..c-1, ordered by smallest member)."""
    if graph.n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = csr_matrix(
        (np.ones(len(graph.indices), dtype=np.int8), graph.indices, graph.indptr),
        shape=(graph.n, graph.n),
    )
    _, labels = _cc(adj, directed=False)
    # relabel by first occurrence so labels are deterministic
    _, first = np.unique(labels, return_index=True)
    remap = np.empty(len(first), dtype=np.int64)
    remap[np.argsort(first)] = np.arange(len(first))
    return remap[labels]


@dataclass
class Instance:
    graph: Graph
    starts: list[int]
    goals: list[int]
    mode: Mode = Mode.ANONYMOUS
    fixed_assignment: list[int] | None = None
    index: GridIndex | None = field(default=None, repr=False)

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.starts = [int(s) for s in self.starts]
        self.goals = [int(g) for g in self.goals]
        k, m = len(self.starts), len(self.goals)
        if k < 1:
            raise InstanceError("at least one agent is required")
        for label, nodes in (("start", self.starts), ("goal", self.goals)):
            for v in nodes:
                if not 0 <= v < self.graph.n:
                    raise InstanceError(f"{label} node {v} not in graph")
            dup = [v for v, c in Counter(nodes).items() if c > 1]
            if dup:
                raise InstanceError(f"duplicate {label} nodes: {sorted(dup)}")
        if self.mode in (Mode.REGULAR, Mode.ANONYMOUS) and m != k:
            raise InstanceError(f"{self.mode.value} mode needs as many goals as agents ({m} != {k})")
        if self.fixed_assignment is not None:
            if self.mode is not Mode.REGULAR:
                raise InstanceError("fixed_assignment is only meaningful in regular mode")
            if sorted(self.fixed_assignment) != list(range(k)):
                raise InstanceError("fixed_assignment must be a permutation of 0..k-1")
        elif self.mode is Mode.REGULAR:
            self.fixed_assignment = list(range(k))

    @property
    def k(self) -> int:
        return len(self.starts)

    @property
    def m(self) -> int:
        return len(self.goals)


@dataclass(frozen=True)
class Solvability:
    solvable: bool
    unreachable_goals: tuple[int, ...] = ()

    def __bool__(self):
        return self.solvable


def screen_solvability(instance: Instance, labels: np.ndarray | None = None) -> Solvability:
    """Detect goals no agent can reach, from component labels alone.

    Regular: a goal outside its assigned agent's component. Anonymous:
    goals in components that hold fewer agents than goals (including none).
    Combinatorial: goals in components without an agent.
    """
    if labels is None:
        labels = connected_components(instance.graph)
    bad: list[int] = []
    if instance.mode is Mode.REGULAR:
        for agent, gi in enumerate(instance.fixed_assignment):
            g = instance.goals[gi]
            if labels[g] != labels[instance.starts[agent]]:
                bad.append(g)
    else:
        agents_in = Counter(int(labels[s]) for s in instance.starts)
        if instance.mode is Mode.ANONYMOUS:
            goals_in = Counter(int(labels[g]) for g in instance.goals)
            for g in instance.goals:
                c = int(labels[g])
                if goals_in[c] > agents_in.get(c, 0):
                    bad.append(g)
        else:
            bad = [g for g in instance.goals if agents_in.get(int(labels[g]), 0) == 0]
    return Solvability(not bad, tuple(bad))


def read_map_file(path) -> GridMap:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_map(fh)


def read_scenario_file(path, grid: GridMap | None = None) -> list[ScenarioEntry]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_scenario(fh, grid)


def format_scenario(entries: Sequence[ScenarioEntry], grid: GridMap, map_name: str = "map.map") -> str:
    out = io.StringIO()
    out.write("version 1\n")
    for e in entries:
        opt = "" if e.optimal is None else f"{e.optimal:.8f}"
        out.write(
            f"{e.bucket}\t{e.map_name or map_name}\t{grid.width}\t{grid.height}\t"
            f"{e.start[0]}\t{e.start[1]}\t{e.goal[0]}\t{e.goal[1]}\t{opt}\n"
        )
    return out.getvalue()
