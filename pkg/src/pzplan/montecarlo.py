"""Closed-loop Monte Carlo validation of predicted confidence sets."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gnss.measurements import make_bias_policy
from .models import wrap_angle
from .zonotope import confidence_zonotope, project, zonotope_norm

__all__ = [
    "ContainmentReport",
    "Ensemble",
    "MonteCarloConfig",
    "RunTrace",
    "containment_stats",
    "run_closed_loop",
    "run_ensemble",
    "run_seeds",
    "write_summary",
    "write_traces_csv",
]

TRACE_HEADER = ["run", "step", "x1", "x2", "theta", "x1_hat", "x2_hat", "theta_hat", "num_sats", "max_abs_bias"]


@dataclass(frozen=True)
class MonteCarloConfig:
    """Ensemble size, master seed, bias policy and switches for controlled experiments.

    ``noise_scale`` multiplies every noise standard deviation and
    ``initial_scale`` the initial dispersion; ``feedback=False`` replays the
    nominal inputs open loop.
    """

    runs: int = 100
    seed: int = 0
    bias_policy: str = "worst-case-constant"
    noise_scale: float = 1.0
    initial_scale: float = 1.0
    feedback: bool = True

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("need at least one run")
        if self.noise_scale < 0 or self.initial_scale < 0:
            raise ValueError("noise scales must be nonnegative")
        make_bias_policy(self.bias_policy)


@dataclass(frozen=True, eq=False)
class RunTrace:
    """One simulated flight: true states and estimates per step, satellites and biases used."""

    truth: np.ndarray
    estimates: np.ndarray
    sats: list
    biases: list

    def __len__(self) -> int:
        return len(self.truth)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Runs simulated together; ``truth`` and ``estimates`` are ``(runs, steps + 1, 3)``."""

    truth: np.ndarray
    estimates: np.ndarray
    biases: list  # per step, (runs, m_k)
    sats: list  # per step, tuple of PRNs

    @property
    def runs(self) -> int:
        return self.truth.shape[0]

    def trace(self, i: int) -> RunTrace:
        return RunTrace(self.truth[i], self.estimates[i], list(self.sats), [b[i] for b in self.biases])


def run_seeds(seed: int, runs: int) -> list[np.random.SeedSequence]:
    """Independent per-run seed sequences; run ``i`` depends only on ``(seed, i)``."""
    return [np.random.SeedSequence(seed, spawn_key=(i,)) for i in range(runs)]


def _draws(plan, cfg: MonteCarloConfig, seq: np.random.SeedSequence):
    """All random quantities of one run, drawn in a fixed order from its own stream."""
    rng_noise, rng_bias = (np.random.default_rng(s) for s in seq.spawn(2))
    chol0 = np.linalg.cholesky(plan.initial_cov + 1e-300 * np.eye(3)) if np.any(plan.initial_cov) else np.zeros((3, 3))
    x0 = chol0 @ rng_noise.standard_normal(3)
    e0 = chol0 @ rng_noise.standard_normal(3)
    w = rng_noise.standard_normal((plan.steps, 3))
    nu = [rng_noise.standard_normal(len(e.noise_var)) for e in plan.schedule]
    policy = make_bias_policy(cfg.bias_policy)
    bias = [policy.draw(e.visible_sats, e.bias_bound[:-1], rng_bias) for e in plan.schedule]
    return x0, e0, w, nu, bias


def run_ensemble(plan, cfg: MonteCarloConfig, runs: list[int] | None = None) -> Ensemble:
    """Simulate truth, EKF and feedback for many runs at once.

    Each step: ``u = u_nom - K (x_hat - x_nom)``, truth through the motion
    model plus process noise, pseudoranges to the satellites the plan's
    schedule uses (true noise plus a bias from the policy, never beyond its
    bound) and a heading reading, then the EKF update with the scheduled
    gain.  Runs are reproducible one by one from ``(cfg.seed, index)``.
    """
    idx = list(range(cfg.runs)) if runs is None else list(runs)
    seqs = run_seeds(cfg.seed, max(idx) + 1 if idx else 0)
    draws = [_draws(plan, cfg, seqs[i]) for i in idx]
    r = len(idx)
    steps = plan.steps
    s_init, s_noise = cfg.initial_scale, cfg.noise_scale
    chol_q = np.linalg.cholesky(plan.process_noise + 1e-300 * np.eye(3)) if np.any(plan.process_noise) else np.zeros((3, 3))
    x = plan.states[0] + s_init * np.array([d[0] for d in draws]).reshape(r, 3)
    xh = x + s_init * np.array([d[1] for d in draws]).reshape(r, 3)
    xh[:, 2] = wrap_angle(xh[:, 2])
    truth = np.empty((r, steps + 1, 3))
    est = np.empty((r, steps + 1, 3))
    truth[:, 0], est[:, 0] = x, xh
    biases, sats = [], []
    altitude = plan.meta.get("altitude", 0.0)
    for k in range(steps):
        entry = plan.schedule[k]
        dev = xh - plan.states[k]
        dev[:, 2] = wrap_angle(dev[:, 2])
        u = plan.inputs[k] - dev @ plan.gains[k].T if cfg.feedback else np.tile(plan.inputs[k], (r, 1))
        w = np.array([d[2][k] for d in draws]).reshape(r, 3) @ chol_q.T * s_noise
        x = _step(x, u, plan.dt) + w
        xbar = _step(xh, u, plan.dt)
        sd = np.sqrt(entry.noise_var) * s_noise
        nu = np.array([d[3][k] for d in draws]).reshape(r, -1) * sd
        b = np.array([d[4][k] for d in draws]).reshape(r, -1) * s_noise
        z = _measure(x, entry.sat_positions, altitude) + nu
        z[:, :-1] += b
        innov = z - _measure(xbar, entry.sat_positions, altitude)
        innov[:, -1] = wrap_angle(innov[:, -1])
        xh = xbar + innov @ entry.gain_l.T
        xh[:, 2] = wrap_angle(xh[:, 2])
        truth[:, k + 1], est[:, k + 1] = x, xh
        biases.append(b)
        sats.append(tuple(entry.visible_sats))
    return Ensemble(truth, est, biases, sats)


def _step(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    th = x[:, 2]
    return np.stack([x[:, 0] + dt * u[:, 0] * np.cos(th), x[:, 1] + dt * u[:, 0] * np.sin(th), th + dt * u[:, 1]], axis=1)


def _measure(x: np.ndarray, sats, altitude: float) -> np.ndarray:
    sats = np.zeros((0, 3)) if sats is None else np.asarray(sats, dtype=float)
    rx = np.column_stack([x[:, 0], x[:, 1], np.full(len(x), altitude)])
    ranges = np.linalg.norm(sats[None, :, :] - rx[:, None, :], axis=2)
    return np.column_stack([ranges, x[:, 2]])


def run_closed_loop(plan, cfg: MonteCarloConfig, index: int = 0) -> RunTrace:
    """Run ``index`` of the ensemble defined by ``cfg``, simulated on its own."""
    return run_ensemble(plan, cfg, [index]).trace(0)


@dataclass(frozen=True, eq=False)
class ContainmentReport:
    """Per-step fraction of runs inside the planar and the full confidence sets."""

    confidence: float
    fraction_2d: np.ndarray
    fraction_3d: np.ndarray
    worst_excursion: np.ndarray  # per run, max over steps of the planar zonotope norm
    meta: dict = field(default_factory=dict)

    @property
    def min_fraction(self) -> float:
        return float(self.fraction_2d.min())

    @property
    def min_fraction_3d(self) -> float:
        return float(self.fraction_3d.min())

    def to_dict(self) -> dict:
        return {
            "confidence": self.confidence,
            "runs": int(self.worst_excursion.size),
            "steps": int(self.fraction_2d.size),
            "min_fraction": self.min_fraction,
            "min_fraction_3d": self.min_fraction_3d,
            "fraction_2d": self.fraction_2d.tolist(),
            "fraction_3d": self.fraction_3d.tolist(),
            "worst_excursion": self.worst_excursion.tolist(),
            **self.meta,
        }


def containment_stats(truth, state_sets, confidence: float, with_3d: bool = True) -> ContainmentReport:
    """Membership of simulated true states in the predicted confidence sets.

    ``truth`` is ``(runs, steps, 3)`` (or a list of :class:`RunTrace`) aligned
    with ``state_sets``.  The planar test uses the position projection; the
    full test compares headings modulo ``2 pi``.
    """
    if not isinstance(truth, np.ndarray):
        truth = np.stack([t.truth if isinstance(t, RunTrace) else np.asarray(t) for t in truth])
    runs, steps, _ = truth.shape
    if steps != len(state_sets):
        raise ValueError(f"traces have {steps} steps but there are {len(state_sets)} sets")
    f2 = np.empty(steps)
    f3 = np.full(steps, np.nan)
    worst = np.zeros(runs)
    for k, s in enumerate(state_sets):
        z2 = confidence_zonotope(project(s, (0, 1)), confidence)
        s2 = _norms(z2, truth[:, k, :2], ())
        f2[k] = np.mean(s2 <= 1.0 + 1e-9)
        worst = np.maximum(worst, s2)
        if with_3d:
            z3 = confidence_zonotope(s, confidence)
            f3[k] = np.mean(_norms(z3, truth[:, k], (2,)) <= 1.0 + 1e-9)
    return ContainmentReport(confidence, f2, f3, worst)


def _norms(z, pts, angle_axes) -> np.ndarray:
    try:
        return zonotope_norm(z, pts, angle_axes)
    except ValueError:
        # degenerate set (no dispersion): only its centre is inside
        d = pts - z.center
        for a in angle_axes:
            d[:, a] = wrap_angle(d[:, a])
        return np.where(np.abs(d).max(axis=1) <= 1e-9, 0.0, np.inf)


def write_traces_csv(ensemble: Ensemble, path) -> None:
    """One row per run and step; columns as in ``TRACE_HEADER``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TRACE_HEADER)
        for i in range(ensemble.runs):
            for k in range(ensemble.truth.shape[1]):
                b = ensemble.biases[k - 1][i] if k else np.zeros(0)
                nsat = len(ensemble.sats[k - 1]) if k else 0
                out.writerow(
                    [i, k, *(f"{v:.6f}" for v in ensemble.truth[i, k]), *(f"{v:.6f}" for v in ensemble.estimates[i, k]),
                     nsat, f"{float(np.abs(b).max(initial=0.0)):.6f}"]
                )


def write_summary(report: ContainmentReport, path, extra: dict | None = None) -> None:
    data = report.to_dict()
    data.update(extra or {})
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True))
