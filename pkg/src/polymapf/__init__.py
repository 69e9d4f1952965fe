"""Polynomial-time anonymous and combinatorial multi-agent path finding."""

from .assignment import Assignment, InfeasibleAssignment, solve_bottleneck, solve_sum
from .map_io import (
    Connectivity, Graph, GridIndex, GridMap, Instance, Mode, build_graph, connected_components,
    format_map, parse_map, parse_scenario, screen_solvability,
)
from .nrpa import Policy, Tour, adapt, rollout, search, seed_policy, split_tour
from .shortest_paths import INF, DistanceMatrix, ShortestPathTree, TreeCache, build_tree, distance_matrix, next_hop
from .simulation import AgentState, ConflictEvent, Schedule, make_agents, simulate
from .validate import KpiReport, ValidationReport, compute_kpis, validate

__version__ = "0.1.0"
