"""Command-line pipeline: build the roadmap, plan agents, validate plans by Monte Carlo, export plot data.

Every command reads one scenario file (JSON, see ``SCENARIO_SCHEMA``).
Relative paths inside it are resolved against the scenario's directory and
all artifacts go to its ``output_dir``.  Artifacts are plain JSON/CSV with
sorted keys and no timestamps; timestamps go to ``run.log`` only.

Exit codes: 0 success, 1 unexpected error, 2 bad configuration or stale
input, 3 at least one agent has no feasible plan, 4 validation inputs
missing or unreadable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .gnss import Constellation, GnssEnvironment, MultipathEnvelope, SceneError, load_almanac, load_scene
from .gnss.almanac import AlmanacError
from .models import NoiseConfig
from .montecarlo import MonteCarloConfig, containment_stats, run_ensemble, write_summary, write_traces_csv
from .planner import (
    GnssScheduler,
    PlannerConfig,
    build_graph,
    config_hash,
    load_graph,
    plan_sequential,
    save_graph,
    verify_plan,
)
from .planner.graph import _scene_hash
from .planner.io import load_plan, save_plan
from .reach import ReachConfig
from .zonotope import zonotopes_intersect

log = logging.getLogger("pzplan")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VALIDATION_IO = 4

GRAPH_FILE = "graph.json"
SUMMARY_FILE = "plan_summary.json"
VALIDATION_FILE = "validation_summary.json"
LOG_FILE = "run.log"

_POSE = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pzplan scenario",
    "type": "object",
    "required": ["scene", "almanac", "epoch", "agents"],
    "additionalProperties": False,
    "properties": {
        "scene": {"type": "string", "description": "scene JSON, relative to this file"},
        "almanac": {"type": "string", "description": "YUMA almanac, relative to this file"},
        "epoch": {"type": "number", "minimum": 0, "description": "GPS seconds of week at step 0"},
        "agents": {
            "type": "array",
            "minItems": 1,
            "description": "in priority order; poses are [x m, y m, heading deg] and must be graph nodes",
            "items": {
                "type": "object",
                "required": ["start", "goal"],
                "additionalProperties": False,
                "properties": {
                    "start": _POSE,
                    "goal": _POSE,
                    "launch_step": {"type": "integer", "minimum": 0},
                },
            },
        },
        "planner": {"type": "object", "description": "PlannerConfig fields; dt and epoch are filled in here"},
        "reach": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "zeta": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "object"}]},
                "max_generators": {"type": ["integer", "null"], "minimum": 1},
                "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "remainders": {"type": "boolean"},
                "remainder_divisor": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q": {"type": "array", "description": "diagonal (3 values) or full 3x3 motion noise covariance"},
                "sigma_rho": {"type": "number", "exclusiveMinimum": 0},
                "heading_var": {"type": "number", "exclusiveMinimum": 0},
                "q_sigma": {"type": "number", "exclusiveMinimum": 0},
                "correlator_spacing": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "multipath_amplitude": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "runs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "bias_policy": {"enum": ["zero", "worst-case-constant", "uniform-per-epoch"]},
                "noise_scale": {"type": "number", "minimum": 0},
                "initial_scale": {"type": "number", "minimum": 0},
                "feedback": {"type": "boolean"},
                "scatter_stride": {"type": "integer", "minimum": 1},
            },
        },
        "output_dir": {"type": "string", "description": "relative to this file; default 'out'"},
    },
}


class ConfigError(Exception):
    """Invalid scenario, unreadable inputs referenced by it, or stale artifacts."""


class ValidationInputError(Exception):
    """Plans or summaries needed by a downstream command are missing or unreadable."""


@dataclass(frozen=True)
class Agent:
    start: tuple[float, float, float]
    goal: tuple[float, float, float]
    launch_step: int = 0

    def to_dict(self) -> dict:
        return {"start": list(self.start), "goal": list(self.goal), "launch_step": self.launch_step}


def _pose(raw) -> tuple[float, float, float]:
    return float(raw[0]), float(raw[1]), math.radians(float(raw[2]))


@dataclass(frozen=True)
class Scenario:
    path: Path
    scene_path: Path
    almanac_path: Path
    epoch: float
    agents: tuple[Agent, ...]
    planner: PlannerConfig
    reach: ReachConfig
    noise: NoiseConfig
    q_sigma: float
    envelope: MultipathEnvelope
    mc: MonteCarloConfig
    scatter_stride: int
    output_dir: Path
    raw: dict

    def with_seed(self, seed: int | None) -> "Scenario":
        if seed is None:
            return self
        return replace(self, mc=replace(self.mc, seed=int(seed)))


def _read_json(path: Path, what: str) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        line = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}\n    {line}") from None


def load_scenario(path) -> Scenario:
    """Parse and check a scenario file; raises :class:`ConfigError` with a readable message."""
    path = Path(path)
    raw = _read_json(path, "scenario")
    try:
        jsonschema.validate(raw, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from None
    base = path.parent
    scene_path = (base / raw["scene"]).resolve()
    almanac_path = (base / raw["almanac"]).resolve()
    for p, what in ((scene_path, "scene"), (almanac_path, "almanac")):
        if not p.is_file():
            raise ConfigError(f"{path}: {what} file {p} does not exist")
    epoch = float(raw["epoch"])
    agents = tuple(
        Agent(_pose(a["start"]), _pose(a["goal"]), int(a.get("launch_step", 0))) for a in raw["agents"]
    )
    try:
        planner = PlannerConfig.from_dict({**raw.get("planner", {}), "epoch": epoch})
        n = dict(raw.get("noise", {}))
        q_sigma = float(n.pop("q_sigma", 3.0))
        envelope = MultipathEnvelope(
            spacing=float(n.pop("correlator_spacing", 0.25)), amplitude=float(n.pop("multipath_amplitude", 1.0))
        )
        noise = NoiseConfig(dt=planner.dt, **n)
        r = dict(raw.get("reach", {}))
        if isinstance(r.get("zeta"), dict):
            r["zeta"] = {int(k): float(v) for k, v in r["zeta"].items()}
        r.setdefault("confidence", planner.confidence)
        reach = ReachConfig(**r)
        m = dict(raw.get("mc", {}))
        stride = int(m.pop("scatter_stride", 10))
        mc = MonteCarloConfig(**m)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return Scenario(
        path=path.resolve(),
        scene_path=scene_path,
        almanac_path=almanac_path,
        epoch=epoch,
        agents=agents,
        planner=planner,
        reach=reach,
        noise=noise,
        q_sigma=q_sigma,
        envelope=envelope,
        mc=mc,
        scatter_stride=stride,
        output_dir=(base / raw.get("output_dir", "out")).resolve(),
        raw=raw,
    )


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_inputs(sc: Scenario):
    try:
        scene = load_scene(sc.scene_path)
    except SceneError as exc:
        raise ConfigError(f"scene {sc.scene_path}: {exc}") from None
    try:
        records = load_almanac(sc.almanac_path)
    except AlmanacError as exc:
        raise ConfigError(f"almanac {sc.almanac_path}: {exc}") from None
    env = GnssEnvironment(
        scene, Constellation(records), envelope=sc.envelope, sigma_rho=sc.noise.sigma_rho, heading_var=sc.noise.heading_var
    )
    return scene, env


def graph_hash(sc: Scenario, scene) -> str:
    return config_hash(sc.planner.to_dict(), _scene_hash(scene))


def plan_hash(sc: Scenario, scene, graph_checksum: str) -> str:
    """Provenance of a planning run: everything that can change a plan."""
    noise = {"q": sc.noise.q.tolist(), "sigma_rho": sc.noise.sigma_rho, "heading_var": sc.noise.heading_var}
    return config_hash(
        {
            "planner": sc.planner.to_dict(),
            "reach": asdict(sc.reach),
            "noise": noise,
            "q_sigma": sc.q_sigma,
            "envelope": asdict(sc.envelope),
            "scene": _scene_hash(scene),
            "almanac": _file_hash(sc.almanac_path),
            "agents": [a.to_dict() for a in sc.agents],
            "graph": graph_checksum,
        }
    )


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _setup_logging(sc: Scenario, command: str, threads: int) -> logging.Handler:
    sc.output_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(sc.output_dir / LOG_FILE)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.info("pzplan %s %s config=%s threads=%d", __version__, command, sc.path, threads)
    return handler


# ---------------------------------------------------------------- commands


def cmd_build_graph(sc: Scenario) -> int:
    scene, _ = _load_inputs(sc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        graph = build_graph(scene, sc.planner)
    for w in caught:
        log.warning("%s", w.message)
        print(f"warning: {w.message}", file=sys.stderr)
    checksum = save_graph(graph, sc.output_dir / GRAPH_FILE)
    log.info("graph: %d nodes, %d edges, checksum %s", graph.num_nodes, graph.num_edges, checksum)
    print(f"graph {sc.output_dir / GRAPH_FILE}: {graph.num_nodes} nodes, {graph.num_edges} edges")
    return EXIT_OK


def _graph_for(sc: Scenario, scene):
    path = sc.output_dir / GRAPH_FILE
    if not path.is_file():
        raise ConfigError(f"{path} not found; run build-graph first")
    try:
        stored = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: unreadable graph ({exc})") from None
    if stored.get("config_hash") != graph_hash(sc, scene):
        raise ConfigError(f"{path} was built for a different configuration; rerun build-graph")
    try:
        return load_graph(path, scene)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _node(graph, pose, what: str, i: int) -> int:
    try:
        return graph.node_id(pose)
    except KeyError:
        shown = [pose[0], pose[1], math.degrees(pose[2])]
        raise ConfigError(f"agent {i}: {what} pose {shown} is not a graph node") from None


def cmd_plan(sc: Scenario) -> int:
    scene, env = _load_inputs(sc)
    graph = _graph_for(sc, scene)
    agents = [
        (_node(graph, a.start, "start", i), _node(graph, a.goal, "goal", i), a.launch_step)
        for i, a in enumerate(sc.agents)
    ]
    chash = plan_hash(sc, scene, graph.checksum())
    scheduler = GnssScheduler(env, sc.noise, q_sigma=sc.q_sigma, time_quantum=sc.planner.sky_time_quantum)
    obstacles = scene.obstacles()
    results = plan_sequential(agents, graph, scheduler, obstacles, sc.planner, sc.reach)
    conf = sc.planner.confidence
    summary = {"config_hash": chash, "graph_checksum": graph.checksum(), "confidence": conf, "agents": []}
    dynamic: dict = {}
    for i, (agent, res) in enumerate(zip(sc.agents, results)):
        path = sc.output_dir / f"plan_agent{i}.json"
        entry = {
            "index": i,
            **agent.to_dict(),
            "status": "ok" if res.success else "failed",
            "reason": res.reason,
            "stats": res.stats.to_dict(),
        }
        if res.success:
            plan = res.plan
            bad = verify_plan(plan, obstacles, conf, dynamic)
            if bad:
                raise RuntimeError(f"agent {i}: plan fails the post-hoc check at steps {bad[:5]}")
            for step, z in plan.position_sets(conf).items():
                dynamic.setdefault(step, []).append(z)
            save_plan(plan, path, {"config_hash": chash, "agent": i})
            entry.update(
                plan_file=path.name,
                length=plan.length,
                steps=plan.steps,
                nodes=list(plan.nodes),
                dynamics_residual=plan.dynamics_residual(),
                covariation=plan.covariations(conf),
            )
            log.info("agent %d: length %.3f m, %d steps, %s", i, plan.length, plan.steps, res.stats.to_dict())
            print(f"agent {i}: ok, length {plan.length:.2f} m, {plan.steps} steps")
        else:
            path.unlink(missing_ok=True)
            log.warning("agent %d: %s (%s)", i, res.reason, res.stats.to_dict())
            print(f"agent {i}: failed ({res.reason})")
        summary["agents"].append(entry)
    _write_json(sc.output_dir / SUMMARY_FILE, summary)
    return EXIT_OK if all(r.success for r in results) else EXIT_INFEASIBLE


def _load_plans(sc: Scenario) -> tuple[dict, dict]:
    """Summary and ``{agent: plan}`` for the successful agents, checked against the scenario."""
    spath = sc.output_dir / SUMMARY_FILE
    try:
        summary = json.loads(spath.read_text())
    except OSError as exc:
        raise ValidationInputError(f"cannot read {spath}: {exc.strerror}; run plan first") from None
    except json.JSONDecodeError as exc:
        raise ValidationInputError(f"{spath}: {exc}") from None
    scene, _ = _load_inputs(sc)
    expected = plan_hash(sc, scene, summary.get("graph_checksum", ""))
    if summary.get("config_hash") != expected:
        raise ConfigError(f"{spath} was produced under a different configuration; rerun plan")
    plans = {}
    for entry in summary["agents"]:
        if entry["status"] != "ok":
            continue
        ppath = sc.output_dir / entry["plan_file"]
        try:
            plan, raw = load_plan(ppath)
        except OSError as exc:
            raise ValidationInputError(f"cannot read {ppath}: {exc.strerror}") from None
        except (ValueError, KeyError) as exc:
            raise ValidationInputError(f"{ppath}: malformed plan ({exc})") from None
        if raw.get("config_hash") != expected:
            raise ConfigError(f"{ppath} does not match {spath}; rerun plan")
        plans[entry["index"]] = plan
    return summary, plans


def write_nominal_csv(plan, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["step", "abs_step", "x1", "x2", "theta", "v", "omega"])
        for k, x in enumerate(plan.states):
            u = plan.inputs[k] if k < plan.steps else (math.nan, math.nan)
            out.writerow([k, plan.launch_step + k, *(f"{v:.6f}" for v in x), *(f"{v:.6f}" for v in u)])


def write_vertex_loops_csv(plan, confidence: float, path) -> None:
    """Closed vertex loop of each step's planar confidence set (first vertex repeated)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["step", "abs_step", "vertex", "x1", "x2"])
        for step, z in plan.position_sets(confidence).items():
            v = z.vertices_2d()
            for j, p in enumerate(np.vstack([v, v[:1]])):
                out.writerow([step - plan.launch_step, step, j, f"{p[0]:.6f}", f"{p[1]:.6f}"])


def write_scatter_csv(truth: np.ndarray, stride: int, launch_step: int, path) -> None:
    steps = sorted(set(range(0, truth.shape[1], stride)) | {truth.shape[1] - 1})
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["run", "step", "abs_step", "x1", "x2"])
        for k in steps:
            for i in range(truth.shape[0]):
                out.writerow([i, k, launch_step + k, f"{truth[i, k, 0]:.6f}", f"{truth[i, k, 1]:.6f}"])


def write_buildings_csv(scene, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["building", "piece", "vertex", "x1", "x2", "height", "blocks_flight"])
        for piece, b in enumerate(scene.buildings):
            fp = np.vstack([b.footprint, b.footprint[:1]])
            for j, p in enumerate(fp):
                out.writerow([b.source_index, piece, j, f"{p[0]:.6f}", f"{p[1]:.6f}", b.height, int(b.height > scene.altitude)])


def _cross_agent_overlaps(plans: dict, confidence: float) -> int:
    """Number of same-step intersecting confidence-set pairs between different agents."""
    sets = {i: p.position_sets(confidence) for i, p in plans.items()}
    ids = sorted(sets)
    count = 0
    for a_pos, a in enumerate(ids):
        for b in ids[a_pos + 1:]:
            for step in sorted(set(sets[a]) & set(sets[b])):
                count += zonotopes_intersect(sets[a][step], sets[b][step])
    return count


def cmd_validate(sc: Scenario) -> int:
    summary, plans = _load_plans(sc)
    if not plans:
        raise ValidationInputError("no successful plans to validate")
    conf = summary["confidence"]
    report_all = {"config_hash": summary["config_hash"], "mc": asdict(sc.mc), "agents": []}
    for i, plan in sorted(plans.items()):
        ens = run_ensemble(plan, sc.mc)
        rep = containment_stats(ens.truth, plan.state_sets, conf)
        extra = {"agent": i, "config_hash": summary["config_hash"], "seed": sc.mc.seed, "bias_policy": sc.mc.bias_policy}
        write_summary(rep, sc.output_dir / f"validation_agent{i}.json", extra)
        write_traces_csv(ens, sc.output_dir / f"traces_agent{i}.csv")
        write_scatter_csv(ens.truth, sc.scatter_stride, plan.launch_step, sc.output_dir / f"scatter_agent{i}.csv")
        write_nominal_csv(plan, sc.output_dir / f"nominal_agent{i}.csv")
        write_vertex_loops_csv(plan, conf, sc.output_dir / f"zonotopes_agent{i}.csv")
        report_all["agents"].append(
            {"agent": i, "min_fraction": rep.min_fraction, "min_fraction_3d": rep.min_fraction_3d}
        )
        log.info("agent %d: min containment %.4f (3D %.4f)", i, rep.min_fraction, rep.min_fraction_3d)
        print(f"agent {i}: min containment {rep.min_fraction:.4f} over {sc.mc.runs} runs")
    report_all["min_fraction"] = min(a["min_fraction"] for a in report_all["agents"])
    report_all["cross_agent_overlaps"] = _cross_agent_overlaps(plans, conf)
    _write_json(sc.output_dir / VALIDATION_FILE, report_all)
    return EXIT_OK


def cmd_export(sc: Scenario) -> int:
    """Plot data for the scene and the planned sets, without running Monte Carlo."""
    summary, plans = _load_plans(sc)
    scene, _ = _load_inputs(sc)
    write_buildings_csv(scene, sc.output_dir / "buildings.csv")
    for i, plan in sorted(plans.items()):
        write_nominal_csv(plan, sc.output_dir / f"nominal_agent{i}.csv")
        write_vertex_loops_csv(plan, summary["confidence"], sc.output_dir / f"zonotopes_agent{i}.csv")
    print(f"exported {len(plans)} plan(s) to {sc.output_dir}")
    return EXIT_OK


COMMANDS = {
    "build-graph": cmd_build_graph,
    "plan": cmd_plan,
    "validate": cmd_validate,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pzplan", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="scenario JSON file")
    common.add_argument("--seed", type=int, default=None, help="override the Monte Carlo master seed")
    common.add_argument("--threads", type=int, default=1, help="worker cap (work currently runs on one thread)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build-graph", parents=[common], help="build and save the roadmap")
    sub.add_parser("plan", parents=[common], help="plan all agents in priority order")
    sub.add_parser("validate", parents=[common], help="Monte Carlo containment check of the plans")
    sub.add_parser("export", parents=[common], help="write plot-ready CSVs for scene and plans")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    handler = None
    try:
        sc = load_scenario(args.config).with_seed(args.seed)
        handler = _setup_logging(sc, args.command, args.threads)
        return COMMANDS[args.command](sc)
    except ConfigError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationInputError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION_IO
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()


if __name__ == "__main__":
    sys.exit(main())
