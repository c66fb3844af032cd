"""Graph-based motion planning under predicted state uncertainty."""

from .config import PlannerConfig, config_hash
from .connect import DubinsPath, NominalEdge, connect, dubins_shortest, lqr_gains
from .graph import Graph, GraphEdge, build_graph, load_graph, path_hits_obstacles, point_in_obstacle, save_graph
from .search import (
    Candidate,
    ChanceChecker,
    GnssScheduler,
    Plan,
    PlanResult,
    SearchStats,
    chance_check,
    explore,
    initial_sets,
    plan_sequential,
    position_confidence_set,
    verify_plan,
)

__all__ = [
    "Candidate",
    "ChanceChecker",
    "DubinsPath",
    "GnssScheduler",
    "Graph",
    "GraphEdge",
    "NominalEdge",
    "Plan",
    "PlanResult",
    "PlannerConfig",
    "SearchStats",
    "build_graph",
    "chance_check",
    "config_hash",
    "connect",
    "dubins_shortest",
    "explore",
    "initial_sets",
    "load_graph",
    "lqr_gains",
    "path_hits_obstacles",
    "plan_sequential",
    "point_in_obstacle",
    "position_confidence_set",
    "save_graph",
    "verify_plan",
]
