"""Uncertainty-aware best-first exploration with chance-constrained collision checks."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..estimator import ScheduleEntry, precompute_schedule
from ..models import NoiseConfig, step_dynamics, wrap_angle
from ..reach import ReachConfig, ReachState, start_reach, step_reach
from ..zonotope import (
    ProbabilisticZonotope,
    Zonotope,
    confidence_zonotope,
    covariation,
    intersects_2d,
    polygon_is_convex,
    project,
    zonotopes_intersect,
)
from .config import PlannerConfig
from .graph import Graph, GraphEdge

__all__ = [
    "Candidate",
    "ChanceChecker",
    "GnssScheduler",
    "Plan",
    "PlanResult",
    "SearchStats",
    "chance_check",
    "explore",
    "initial_sets",
    "plan_sequential",
    "position_confidence_set",
    "verify_plan",
]


def position_confidence_set(predicted: ProbabilisticZonotope, confidence: float) -> Zonotope:
    """Planar confidence zonotope of a predicted vehicle state set."""
    return confidence_zonotope(project(predicted, (0, 1)), confidence)


def chance_check(predicted: ProbabilisticZonotope, obstacles, confidence: float) -> bool:
    """True (safe) when the planar confidence set at ``confidence`` touches no obstacle.

    ``obstacles`` holds convex polygons ``(m, 2)`` and/or 2D zonotopes.
    """
    z = position_confidence_set(predicted, confidence)
    for ob in obstacles:
        if isinstance(ob, Zonotope):
            if zonotopes_intersect(z, ob):
                return False
        elif intersects_2d(z, ob):
            return False
    return True


class ChanceChecker:
    """Static polygons plus time-indexed zonotopes, with bounding-box prefilters."""

    def __init__(self, polygons, dynamic: dict[int, list[Zonotope]] | None = None, confidence: float = 0.9973):
        self.polygons = [np.asarray(p, dtype=float) for p in polygons]
        for i, p in enumerate(self.polygons):
            if not polygon_is_convex(p):
                raise ValueError(f"obstacle {i} is not convex")
        self.boxes = np.array([[*p.min(axis=0), *p.max(axis=0)] for p in self.polygons]).reshape(-1, 4)
        self.dynamic = dynamic or {}
        self.confidence = confidence

    def check(self, predicted: ProbabilisticZonotope, step: int) -> str | None:
        """``None`` when safe, else ``"static"`` or ``"dynamic"``."""
        z = position_confidence_set(predicted, self.confidence)
        lo, hi = z.interval_hull()
        if len(self.boxes):
            near = np.flatnonzero(
                (hi[0] >= self.boxes[:, 0]) & (lo[0] <= self.boxes[:, 2]) & (hi[1] >= self.boxes[:, 1]) & (lo[1] <= self.boxes[:, 3])
            )
            for i in near:
                if intersects_2d(z, self.polygons[i]):
                    return "static"
        for other in self.dynamic.get(step, ()):
            olo, ohi = other.interval_hull()
            if np.all(hi >= olo) and np.all(lo <= ohi) and zonotopes_intersect(z, other):
                return "dynamic"
        return None


class _CachedSky:
    """Environment wrapper memoising satellite views per position and time bucket."""

    def __init__(self, env, quantum: float):
        self.env = env
        self.scene = env.scene
        self.quantum = quantum
        self._views: dict = {}

    def view(self, position, t: float):
        tb = round(t / self.quantum) if self.quantum > 0 else t
        key = (round(float(position[0]), 6), round(float(position[1]), 6), tb)
        out = self._views.get(key)
        if out is None:
            out = self._views[key] = self.env.view(position, tb * self.quantum if self.quantum > 0 else t)
        return out


class GnssScheduler:
    """Filter gain schedule along an edge from the GNSS environment.

    Satellite views are evaluated at times rounded to ``time_quantum``
    seconds and cached, so revisiting an edge at a nearby time is cheap.
    """

    def __init__(self, env, noise: NoiseConfig, q_sigma: float = 3.0, time_quantum: float = 1.0):
        self.env = env
        self.sky = _CachedSky(env, time_quantum)
        self.noise = noise
        self.q_sigma = q_sigma

    @property
    def altitude(self) -> float:
        return self.env.scene.altitude

    def __call__(self, nominal, p0, t0: float) -> list[ScheduleEntry]:
        return precompute_schedule(
            nominal.states, nominal.inputs, nominal.gains, self.sky, p0, self.noise, t0=t0, q_sigma=self.q_sigma
        )


def initial_sets(pose, cfg: PlannerConfig) -> tuple[ProbabilisticZonotope, ProbabilisticZonotope]:
    """Start state set around the nominal pose and the matching initial error set."""
    p0 = np.diag(cfg.initial_cov)
    x0 = np.asarray(pose, dtype=float)
    return ProbabilisticZonotope.gaussian(x0, p0), ProbabilisticZonotope.gaussian(np.zeros(3), p0)


@dataclass
class SearchStats:
    expansions: int = 0
    pushed: int = 0
    rejected_static: int = 0
    rejected_dynamic: int = 0
    pruned: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(eq=False)
class Candidate:
    """A trajectory ending at ``node`` at absolute step ``step``."""

    node: int
    step: int
    length: float
    reach: ReachState
    parent: "Candidate | None" = None
    edge: GraphEdge | None = None
    schedule: list = field(default_factory=list)
    state_sets: list = field(default_factory=list)
    error_sets: list = field(default_factory=list)
    covariation: float = 0.0
    visited: frozenset = frozenset()

    def chain(self) -> list["Candidate"]:
        out, c = [], self
        while c is not None:
            out.append(c)
            c = c.parent
        return out[::-1]


@dataclass(eq=False)
class Plan:
    """Concatenated nominal trajectory with its predicted sets.

    ``states`` and the set lists have one more entry than ``inputs``;
    ``schedule[k]`` drives the update into step ``k + 1``.
    """

    states: np.ndarray
    inputs: np.ndarray
    gains: np.ndarray
    schedule: list
    state_sets: list
    error_sets: list
    nodes: list
    length: float
    launch_step: int
    dt: float
    initial_cov: np.ndarray
    process_noise: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.inputs)

    def dynamics_residual(self) -> float:
        if not self.steps:
            return 0.0
        nxt = np.array([step_dynamics(x, u, self.dt) for x, u in zip(self.states[:-1], self.inputs)])
        d = nxt - self.states[1:]
        d[:, 2] = wrap_angle(d[:, 2])
        return float(np.abs(d).max())

    def covariations(self, confidence: float) -> list[float]:
        return [covariation(position_confidence_set(s, confidence)) for s in self.state_sets]

    def position_sets(self, confidence: float) -> dict[int, Zonotope]:
        """Planar confidence sets keyed by absolute step."""
        return {self.launch_step + k: position_confidence_set(s, confidence) for k, s in enumerate(self.state_sets)}


@dataclass(eq=False)
class PlanResult:
    success: bool
    plan: Plan | None
    stats: SearchStats
    reason: str = ""


def _assemble_plan(goal: Candidate, cfg: PlannerConfig, q, altitude: float) -> Plan:
    chain = goal.chain()
    root = chain[0]
    states = [root.reach.nominal[None, :]]
    inputs, gains, schedule = [], [], []
    sets, errs = [root.reach.state_set], [root.reach.error_set]
    for c in chain[1:]:
        nom = c.edge.nominal
        states.append(nom.states[1:])
        inputs.append(nom.inputs)
        gains.append(nom.gains)
        schedule.extend(c.schedule)
        sets.extend(c.state_sets)
        errs.extend(c.error_sets)
    return Plan(
        states=np.vstack(states),
        inputs=np.vstack(inputs) if inputs else np.zeros((0, 2)),
        gains=np.concatenate(gains) if gains else np.zeros((0, 2, 3)),
        schedule=schedule,
        state_sets=sets,
        error_sets=errs,
        nodes=[c.node for c in chain],
        length=float(sum(c.edge.length for c in chain[1:])),
        launch_step=root.step,
        dt=cfg.dt,
        initial_cov=np.diag(cfg.initial_cov),
        process_noise=np.asarray(q, dtype=float),
        meta={"altitude": float(altitude)},
    )


def _evaluate(parent: Candidate, edge: GraphEdge, scheduler, checker: ChanceChecker, cfg, reach_cfg, q):
    """Propagate the parent's sets along ``edge``; returns a candidate or a failure tag."""
    nom = edge.nominal
    schedule = scheduler(nom, parent.reach.filter_cov, cfg.epoch + parent.step * cfg.dt)
    state = parent.reach
    sets, errs = [], []
    for k, entry in enumerate(schedule, start=1):
        state = step_reach(state, entry, q, cfg.dt, reach_cfg, scheduler.altitude)
        hit = checker.check(state.state_set, parent.step + k)
        if hit is not None:
            return hit
        sets.append(state.state_set)
        errs.append(state.error_set)
    return Candidate(
        node=edge.dst,
        step=parent.step + nom.steps,
        length=parent.length + edge.length,
        reach=state,
        parent=parent,
        edge=edge,
        schedule=schedule,
        state_sets=sets,
        error_sets=errs,
        covariation=covariation(position_confidence_set(state.state_set, checker.confidence)),
        visited=parent.visited | {edge.dst},
    )


def explore(
    graph: Graph,
    start: int,
    goal: int,
    scheduler,
    obstacles,
    cfg: PlannerConfig | None = None,
    reach_cfg: ReachConfig = ReachConfig(),
    launch_step: int = 0,
    dynamic: dict[int, list[Zonotope]] | None = None,
) -> PlanResult:
    """Best-first search by accumulated nominal length.

    With ``cfg.heuristic`` the queue key adds the straight-line distance to
    the goal.  Edge lengths are never shorter than their chords, so the bound
    is consistent and the first goal arrival is still the shortest one that
    survives the checks; it only skips candidates that cannot beat it.  A popped candidate has its sets propagated along its last edge and is
    chance-checked at every step; survivors at the same node and arrival
    step are filtered by dominance (length, then covariation within the
    configured slack).  The first goal arrival is returned.
    """
    cfg = cfg or graph.config
    q = scheduler.noise.q
    if abs(scheduler.noise.dt - cfg.dt) > 1e-12:
        raise ValueError("noise config and planner use different time steps")
    checker = ChanceChecker(obstacles, dynamic, cfg.confidence)
    stats = SearchStats()
    x0, xt0 = initial_sets(graph.poses[start], cfg)
    root = Candidate(start, launch_step, 0.0, start_reach(x0, graph.poses[start], xt0), visited=frozenset({start}))
    hit = checker.check(root.reach.state_set, launch_step)
    if hit is not None:
        setattr(stats, f"rejected_{hit}", 1)
        return PlanResult(False, None, stats, f"start set violates the chance constraint ({hit})")
    root.covariation = covariation(position_confidence_set(root.reach.state_set, cfg.confidence))
    kept: dict[tuple[int, int], list[tuple[float, float]]] = {(start, launch_step): [(0.0, root.covariation)]}
    seq = itertools.count()
    frontier: list = []

    goal_xy = graph.poses[goal, :2]

    def lower_bound(node: int) -> float:
        return float(np.hypot(*(graph.poses[node, :2] - goal_xy))) if cfg.heuristic else 0.0

    def push(c: Candidate):
        for e in graph.out_edges(c.node):
            if e.dst in c.visited:
                continue
            key = c.length + e.length + lower_bound(e.dst)
            heapq.heappush(frontier, (key, e.dst, c.step + e.steps, next(seq), c, e))
            stats.pushed += 1

    if start == goal:
        return PlanResult(True, _assemble_plan(root, cfg, q, scheduler.altitude), stats)
    if goal not in graph.reachable_from(start):
        return PlanResult(False, None, stats, "goal is not reachable in the graph")
    push(root)
    while frontier:
        if stats.expansions >= cfg.max_expansions:
            return PlanResult(False, None, stats, f"expansion budget of {cfg.max_expansions} exhausted")
        _, node, step, _, parent, edge = heapq.heappop(frontier)
        stats.expansions += 1
        cand = _evaluate(parent, edge, scheduler, checker, cfg, reach_cfg, q)
        if isinstance(cand, str):
            setattr(stats, f"rejected_{cand}", getattr(stats, f"rejected_{cand}") + 1)
            continue
        slot = kept.setdefault((node, step), [])
        bound = cand.covariation * (1.0 + cfg.dominance_slack)
        if any(ln <= cand.length and cv <= bound for ln, cv in slot):
            stats.pruned += 1
            continue
        slot.append((cand.length, cand.covariation))
        if node == goal:
            return PlanResult(True, _assemble_plan(cand, cfg, q, scheduler.altitude), stats)
        push(cand)
    return PlanResult(False, None, stats, "frontier exhausted")


def verify_plan(plan: Plan, obstacles, confidence: float, dynamic: dict[int, list[Zonotope]] | None = None) -> list[int]:
    """Independent post-hoc pass: absolute steps whose sets fail the chance check."""
    bad = []
    dynamic = dynamic or {}
    for k, s in enumerate(plan.state_sets):
        step = plan.launch_step + k
        if not chance_check(s, list(obstacles) + list(dynamic.get(step, [])), confidence):
            bad.append(step)
    return bad


def plan_sequential(
    agents,
    graph: Graph,
    scheduler,
    obstacles,
    cfg: PlannerConfig | None = None,
    reach_cfg: ReachConfig = ReachConfig(),
) -> list[PlanResult]:
    """Plan agents in priority order; earlier plans become time-indexed obstacles.

    ``agents`` is a sequence of ``(start_node, goal_node, launch_step)``.
    """
    cfg = cfg or graph.config
    dynamic: dict[int, list[Zonotope]] = {}
    results = []
    for start, goal, launch in agents:
        res = explore(graph, start, goal, scheduler, obstacles, cfg, reach_cfg, launch, dynamic)
        results.append(res)
        if res.success:
            for step, z in res.plan.position_sets(cfg.confidence).items():
                dynamic.setdefault(step, []).append(z)
    return results
