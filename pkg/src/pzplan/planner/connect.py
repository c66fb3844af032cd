"""CONNECT: Dubins heading profile, exact discrete nominal, and LQR tracking gains."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_are

from ..models import jacobians_dynamics, step_dynamics, wrap_angle
from .config import PlannerConfig

__all__ = ["DubinsPath", "NominalEdge", "connect", "dubins_shortest", "lqr_gains"]

TWO_PI = 2.0 * math.pi


def _mod(a: float) -> float:
    return a % TWO_PI


@dataclass(frozen=True)
class DubinsPath:
    """Word such as ``"LSR"`` with segment lengths in metres, for turning radius ``radius``."""

    word: str
    lengths: tuple[float, float, float]
    radius: float

    @property
    def length(self) -> float:
        return float(sum(self.lengths))


def _advance(pose, kind: str, length: float, radius: float):
    x, y, th = pose
    if kind == "S":
        return x + length * math.cos(th), y + length * math.sin(th), th
    ang = length / radius
    if kind == "L":
        return x + radius * (math.sin(th + ang) - math.sin(th)), y + radius * (math.cos(th) - math.cos(th + ang)), th + ang
    return x + radius * (math.sin(th) - math.sin(th - ang)), y + radius * (math.cos(th - ang) - math.cos(th)), th - ang


def _words(alpha: float, beta: float, d: float):
    sa, ca, sb, cb = math.sin(alpha), math.cos(alpha), math.sin(beta), math.cos(beta)
    cab = math.cos(alpha - beta)
    out = []
    tmp = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
    if tmp >= 0:
        th = math.atan2(cb - ca, d + sa - sb)
        out.append(("LSL", (_mod(-alpha + th), math.sqrt(tmp), _mod(beta - th))))
    tmp = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
    if tmp >= 0:
        th = math.atan2(ca - cb, d - sa + sb)
        out.append(("RSR", (_mod(alpha - th), math.sqrt(tmp), _mod(-beta + th))))
    tmp = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
    if tmp >= 0:
        p = math.sqrt(tmp)
        th = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        out.append(("LSR", (_mod(-alpha + th), p, _mod(-_mod(beta) + th))))
    tmp = -2 + d * d + 2 * cab - 2 * d * (sa + sb)
    if tmp >= 0:
        p = math.sqrt(tmp)
        th = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        out.append(("RSL", (_mod(alpha - th), p, _mod(beta - th))))
    tmp = (6.0 - d * d + 2 * cab + 2 * d * (sa - sb)) / 8.0
    if abs(tmp) <= 1:
        p = _mod(TWO_PI - math.acos(tmp))
        t = _mod(alpha - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
        out.append(("RLR", (t, p, _mod(alpha - beta - t + p))))
    tmp = (6.0 - d * d + 2 * cab + 2 * d * (sb - sa)) / 8.0
    if abs(tmp) <= 1:
        p = _mod(TWO_PI - math.acos(tmp))
        t = _mod(-alpha - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
        out.append(("LRL", (t, p, _mod(_mod(beta) - alpha - t + p))))
    return out


def dubins_shortest(start, goal, radius: float) -> DubinsPath | None:
    """Shortest Dubins path between two poses ``(x, y, theta)``.

    Every candidate word is integrated in closed form and kept only if it
    actually lands on ``goal``, which guards against formula edge cases.
    """
    x0, y0, th0 = map(float, start)
    x1, y1, th1 = map(float, goal)
    dx, dy = x1 - x0, y1 - y0
    dist = math.hypot(dx, dy)
    phi = math.atan2(dy, dx) if dist > 0 else 0.0
    alpha, beta, d = _mod(th0 - phi), _mod(th1 - phi), dist / radius
    best = None
    for word, (t, p, q) in _words(alpha, beta, d):
        lengths = (t * radius, p * radius, q * radius)
        pose = (x0, y0, th0)
        for kind, seg in zip(word, lengths):
            pose = _advance(pose, kind, seg, radius)
        err = max(abs(pose[0] - x1), abs(pose[1] - y1), abs(float(wrap_angle(pose[2] - th1))) * radius)
        if err > 1e-6 * max(radius, dist):
            continue
        cand = DubinsPath(word, lengths, radius)
        if best is None or cand.length < best.length - 1e-12:
            best = cand
    return best


@dataclass(frozen=True, eq=False)
class NominalEdge:
    """Nominal states ``(T+1, 3)``, inputs ``(T, 2)`` and feedback gains ``(T, 2, 3)``.

    ``states[k+1] == step_dynamics(states[k], inputs[k], dt)`` at every step.
    """

    states: np.ndarray
    inputs: np.ndarray
    gains: np.ndarray
    start: int | None = None
    end: int | None = None
    word: str = ""

    @property
    def steps(self) -> int:
        return len(self.inputs)

    @property
    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.states[:, :2], axis=0).T)))

    def translated(self, offset, start=None, end=None) -> "NominalEdge":
        s = self.states.copy()
        s[:, :2] += np.asarray(offset, dtype=float)
        return NominalEdge(s, self.inputs, self.gains, start, end, self.word)


def _split_steps(lengths, total: int, arcs) -> list[int]:
    raw = np.asarray(lengths, dtype=float) / max(sum(lengths), 1e-300) * total
    n = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - n), kind="stable")[: total - n.sum()]:
        n[i] += 1
    # every turning segment needs at least one step
    for i in range(3):
        if arcs[i] and n[i] == 0:
            j = int(np.argmax(n))
            n[j] -= 1
            n[i] += 1
    return n.tolist()


def lqr_gains(states, inputs, dt: float, q_w, r_w) -> np.ndarray:
    """Finite-horizon discrete LQR gains along a nominal, terminal cost from the Riccati fixed point."""
    q = np.diag(q_w)
    r = np.diag(r_w)
    steps = len(inputs)
    gains = np.zeros((steps, 2, 3))
    if steps == 0:
        return gains
    a_t, b_t = jacobians_dynamics(states[-1], inputs[-1], dt)
    try:
        p = solve_discrete_are(a_t, b_t, q, r)
    except (np.linalg.LinAlgError, ValueError):
        p = q.copy()
    for k in range(steps - 1, -1, -1):
        a, b = jacobians_dynamics(states[k], inputs[k], dt)
        gains[k] = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
        p = q + a.T @ p @ (a - b @ gains[k])
        p = 0.5 * (p + p.T)
    return gains


def connect(xi, xj, cfg: PlannerConfig, start: int | None = None, end: int | None = None) -> NominalEdge | None:
    """Nominal trajectory and tracking gains from ``xi`` to ``xj``, or ``None`` if infeasible.

    The heading profile follows the shortest Dubins path; per-step speeds are
    then the least-squares correction of the nominal speed that lands
    exactly on the target position.
    """
    xi = np.array(xi, dtype=float)
    xj = np.array(xj, dtype=float)
    xi[2], xj[2] = wrap_angle(xi[2]), wrap_angle(xj[2])
    if np.allclose(xi[:2], xj[:2], atol=1e-9) and abs(wrap_angle(xi[2] - xj[2])) < 1e-9:
        return NominalEdge(xi[None, :], np.zeros((0, 2)), np.zeros((0, 2, 3)), start, end, "")
    path = dubins_shortest(xi, xj, cfg.turn_radius)
    if path is None:
        return None
    straight = float(np.hypot(*(xj[:2] - xi[:2])))
    if path.length > cfg.length_factor * straight + 1e-9:
        return None
    dt = cfg.dt
    total = max(1, int(round(path.length / (cfg.v_nominal * dt))))
    arcs = [kind != "S" and seg > 1e-12 for kind, seg in zip(path.word, path.lengths)]
    if total < sum(arcs):
        total = sum(arcs)
    counts = _split_steps(path.lengths, total, arcs)
    omegas = []
    for kind, seg, n in zip(path.word, path.lengths, counts):
        if n == 0:
            continue
        w = 0.0 if kind == "S" else (seg / path.radius) / (n * dt) * (1.0 if kind == "L" else -1.0)
        omegas.extend([w] * n)
    omegas = np.asarray(omegas)
    if np.any(np.abs(omegas) > cfg.omega_max + 1e-12):
        return None
    headings = xi[2] + np.concatenate([[0.0], np.cumsum(omegas[:-1] * dt)])
    amat = dt * np.vstack([np.cos(headings), np.sin(headings)])
    target = xj[:2] - xi[:2]
    v0 = np.full(total, cfg.v_nominal)
    resid = target - amat @ v0
    corr, *_ = np.linalg.lstsq(amat, resid, rcond=None)
    speeds = v0 + corr
    if np.linalg.norm(amat @ speeds - target) > 1e-6 * max(1.0, straight):
        return None
    if np.any(speeds < 0) or np.any(speeds > cfg.v_max):
        return None
    inputs = np.column_stack([speeds, omegas])
    states = np.empty((total + 1, 3))
    states[0] = xi
    for k in range(total):
        states[k + 1] = step_dynamics(states[k], inputs[k], dt)
    if np.abs(states[-1, :2] - xj[:2]).max() > 1e-6 or abs(wrap_angle(states[-1, 2] - xj[2])) > 1e-9:
        return None
    gains = lqr_gains(states, inputs, dt, cfg.lqr_state_weights, cfg.lqr_input_weights)
    return NominalEdge(states, inputs, gains, start, end, path.word)
