"""Versioned JSON encoding of plans."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..estimator import ScheduleEntry
from ..zonotope import ProbabilisticZonotope
from .search import Plan

__all__ = ["PLAN_FORMAT", "load_plan", "plan_from_dict", "plan_to_dict", "save_plan"]

PLAN_FORMAT = "pzplan-plan/1"

_ENTRY_ARRAYS = (
    "a", "b", "c", "gain_l", "feedback_k", "r_hat", "sat_positions", "noise_var", "bias_bound",
    "nominal_state", "nominal_prev", "input_prev", "p_post",
)


def _arr(v):
    return None if v is None else np.asarray(v).tolist()


def _set_to_dict(p: ProbabilisticZonotope) -> dict:
    return {"center": p.center.tolist(), "generators": p.generators.tolist(), "covariance": p.covariance.tolist()}


def _set_from_dict(d: dict) -> ProbabilisticZonotope:
    c = np.asarray(d["center"], dtype=float)
    g = np.asarray(d["generators"], dtype=float).reshape(c.size, -1)
    return ProbabilisticZonotope(c, g, np.asarray(d["covariance"], dtype=float))


def plan_to_dict(plan: Plan, extra: dict | None = None) -> dict:
    """Per-step nominal state, input, gain, predicted sets and filter schedule.

    Step ``k`` carries the state and sets at ``k``; the input, gain and the
    schedule entry of the transition into ``k + 1`` are stored with it.
    """
    steps = []
    for k in range(len(plan.states)):
        row = {
            "k": k,
            "abs_step": plan.launch_step + k,
            "state": plan.states[k].tolist(),
            "state_set": _set_to_dict(plan.state_sets[k]),
            "error_set": _set_to_dict(plan.error_sets[k]),
        }
        if k < plan.steps:
            e = plan.schedule[k]
            row["input"] = plan.inputs[k].tolist()
            row["gain"] = plan.gains[k].tolist()
            row["schedule"] = {name: _arr(getattr(e, name)) for name in _ENTRY_ARRAYS}
            row["schedule"]["visible_sats"] = list(e.visible_sats)
            row["schedule"]["time"] = e.time
        steps.append(row)
    out = {
        "format": PLAN_FORMAT,
        "length": plan.length,
        "launch_step": plan.launch_step,
        "dt": plan.dt,
        "nodes": list(plan.nodes),
        "initial_cov": plan.initial_cov.tolist(),
        "process_noise": plan.process_noise.tolist(),
        "meta": plan.meta,
        "steps": steps,
    }
    out.update(extra or {})
    return out


def plan_from_dict(data: dict) -> Plan:
    if data.get("format") != PLAN_FORMAT:
        raise ValueError(f"not a {PLAN_FORMAT} document")
    rows = data["steps"]
    schedule = []
    for row in rows[:-1]:
        s = row["schedule"]
        kw = {name: (None if s[name] is None else np.asarray(s[name], dtype=float)) for name in _ENTRY_ARRAYS}
        n = len(row["state"])
        kw["c"] = kw["c"].reshape(-1, n)
        kw["gain_l"] = kw["gain_l"].reshape(n, -1)
        if kw["sat_positions"] is not None:
            kw["sat_positions"] = kw["sat_positions"].reshape(-1, 3)
        schedule.append(ScheduleEntry(visible_sats=tuple(s["visible_sats"]), time=s["time"], **kw))
    return Plan(
        states=np.array([r["state"] for r in rows], dtype=float),
        inputs=np.array([r["input"] for r in rows[:-1]], dtype=float).reshape(-1, 2),
        gains=np.array([r["gain"] for r in rows[:-1]], dtype=float).reshape(-1, 2, 3),
        schedule=schedule,
        state_sets=[_set_from_dict(r["state_set"]) for r in rows],
        error_sets=[_set_from_dict(r["error_set"]) for r in rows],
        nodes=list(data["nodes"]),
        length=float(data["length"]),
        launch_step=int(data["launch_step"]),
        dt=float(data["dt"]),
        initial_cov=np.asarray(data["initial_cov"], dtype=float),
        process_noise=np.asarray(data["process_noise"], dtype=float),
        meta=dict(data.get("meta", {})),
    )


def save_plan(plan: Plan, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan, extra), separators=(",", ":"), sort_keys=True))


def load_plan(path) -> tuple[Plan, dict]:
    """Plan plus the raw document (for provenance fields such as the config hash)."""
    data = json.loads(Path(path).read_text())
    return plan_from_dict(data), data
