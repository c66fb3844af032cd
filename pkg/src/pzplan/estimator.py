"""EKF with an over-bounded measurement covariance and its offline gain schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .models import jacobian_measurement, jacobians_dynamics, measurement, step_dynamics, wrap_angle

__all__ = [
    "FilterState",
    "ScheduleEntry",
    "correct",
    "correct_linear",
    "kalman_gain",
    "overbound_measurement_cov",
    "precompute_schedule",
    "predict",
]


class DegenerateGeometryError(np.linalg.LinAlgError):
    pass


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class FilterState:
    estimate: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        x = np.array(self.estimate, dtype=float).reshape(-1)
        p = np.array(self.covariance, dtype=float)
        if p.shape != (x.size, x.size):
            raise ValueError("covariance shape does not match the state")
        if np.max(np.abs(p - p.T)) > 1e-9 * max(1.0, np.abs(p).max()):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "estimate", x)
        object.__setattr__(self, "covariance", p)


@dataclass(frozen=True, eq=False)
class ScheduleEntry:
    """Matrices consumed by the step-``k`` update of the error recursion.

    ``a``, ``b`` and ``feedback_k`` belong to the transition from ``k-1``
    (linearized at the nominal state/input of step ``k-1``); ``c``,
    ``gain_l`` and ``r_hat`` belong to the correction at step ``k``.  The
    measurement dimension may change from one entry to the next.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    gain_l: np.ndarray
    feedback_k: np.ndarray
    r_hat: np.ndarray | None = None
    visible_sats: tuple[int, ...] = ()
    sat_positions: np.ndarray | None = None
    noise_var: np.ndarray | None = None
    bias_bound: np.ndarray | None = None
    nominal_state: np.ndarray | None = None
    nominal_prev: np.ndarray | None = None
    input_prev: np.ndarray | None = None
    p_post: np.ndarray | None = None
    time: float = 0.0

    def __post_init__(self):
        n = self.a.shape[0]
        m = self.c.shape[0]
        if self.a.shape != (n, n) or self.b.shape[0] != n or self.c.shape[1] != n:
            raise ValueError("inconsistent A/B/C shapes")
        if self.gain_l.shape != (n, m):
            raise ValueError(f"gain shape {self.gain_l.shape} does not match ({n}, {m})")
        if self.feedback_k.shape != (self.b.shape[1], n):
            raise ValueError("feedback gain shape does not match B")
        if self.r_hat is not None and np.any(np.diag(self.r_hat) <= 0):
            raise ValueError("over-bounded covariance must have a positive diagonal")

    @property
    def meas_dim(self) -> int:
        return self.c.shape[0]


def overbound_measurement_cov(r_diag, bias_bound, q_sigma: float = 3.0) -> np.ndarray:
    """Diagonal Gaussian whose ``q_sigma`` tail covers that of ``N(+-b, R)``.

    Per channel ``sqrt(R_hat) = sqrt(R) + b / q_sigma``.
    """
    r = np.asarray(r_diag, dtype=float)
    b = np.asarray(bias_bound, dtype=float)
    if np.any(r <= 0) or np.any(b < 0) or q_sigma <= 0:
        raise ValueError("need R > 0, b >= 0 and q_sigma > 0")
    return np.diag(np.where(b > 0, (np.sqrt(r) + b / q_sigma) ** 2, r))


def predict(f: FilterState, u, q, dt: float, a: np.ndarray | None = None) -> FilterState:
    """EKF time update.  ``a`` overrides the Jacobian (pass the nominal one)."""
    if a is None:
        a, _ = jacobians_dynamics(f.estimate, u, dt)
    x = step_dynamics(f.estimate, u, dt)
    return FilterState(x, _sym(a @ f.covariance @ a.T + np.asarray(q, dtype=float)))


def kalman_gain(p_bar: np.ndarray, c: np.ndarray, r_hat: np.ndarray) -> np.ndarray:
    if c.shape[0] == 0:
        return np.zeros((p_bar.shape[0], 0))
    s = _sym(c @ p_bar @ c.T + r_hat)
    try:
        factor = cho_factor(s)
    except LinAlgError as exc:
        raise DegenerateGeometryError(f"innovation covariance is not positive definite: {exc}") from None
    return cho_solve(factor, c @ p_bar).T


def correct_linear(f: FilterState, innovation, c: np.ndarray, r_hat: np.ndarray) -> tuple[FilterState, np.ndarray]:
    """Measurement update given the innovation ``z - h(x_bar)``; returns the new state and the gain."""
    p_bar = f.covariance
    gain = kalman_gain(p_bar, c, r_hat)
    x = f.estimate + gain @ np.asarray(innovation, dtype=float)
    p = _sym(p_bar - gain @ c @ p_bar)
    return FilterState(x, p), gain


def correct(f: FilterState, z, sats, r_hat, altitude: float = 0.0, c: np.ndarray | None = None) -> FilterState:
    """EKF correction with range + heading measurements (heading innovation wrapped)."""
    z = np.asarray(z, dtype=float)
    innovation = z - measurement(f.estimate, sats, altitude)
    innovation[-1] = wrap_angle(innovation[-1])
    if c is None:
        c = jacobian_measurement(f.estimate, sats, altitude)
    out, _ = correct_linear(f, innovation, c, np.asarray(r_hat, dtype=float))
    return FilterState(np.concatenate([out.estimate[:2], [wrap_angle(out.estimate[2])]]), out.covariance)


def precompute_schedule(
    states,
    inputs,
    gains,
    env,
    p0,
    noise,
    t0: float = 0.0,
    q_sigma: float = 3.0,
    r_hat_rule: Callable | None = None,
) -> list[ScheduleEntry]:
    """Run the filter covariance recursion offline along a nominal trajectory.

    ``states`` has one more row than ``inputs``/``gains``.  ``env.view(pos, t)``
    supplies the usable satellites at each nominal position.  All Jacobians
    are taken at the nominal, so the online filter reproduces these gains.
    ``r_hat_rule(noise_var, bias_bound)`` replaces the over-bounding rule.
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if len(inputs) == 0:
        raise ValueError("nominal trajectory is empty")
    if len(states) != len(inputs) + 1 or len(gains) != len(inputs):
        raise ValueError("need len(states) == len(inputs) + 1 == len(gains) + 1")
    if r_hat_rule is None:
        r_hat_rule = lambda r, b: overbound_measurement_cov(r, b, q_sigma)  # noqa: E731
    altitude = env.scene.altitude
    dt = noise.dt
    p = np.asarray(p0, dtype=float)
    out = []
    for k in range(1, len(states)):
        a, b = jacobians_dynamics(states[k - 1], inputs[k - 1], dt)
        p_bar = _sym(a @ p @ a.T + noise.q)
        t = t0 + k * dt
        view = env.view(states[k, :2], t)
        c = jacobian_measurement(states[k], view.positions, altitude)
        r = np.concatenate([view.noise_var, [noise.heading_var]])
        bias = np.concatenate([view.bias_bound, [0.0]])
        r_hat = r_hat_rule(r, bias)
        gain = kalman_gain(p_bar, c, r_hat)
        p = _sym(p_bar - gain @ c @ p_bar)
        out.append(
            ScheduleEntry(
                a=a,
                b=b,
                c=c,
                gain_l=gain,
                feedback_k=gains[k - 1],
                r_hat=r_hat,
                visible_sats=view.prns,
                sat_positions=view.positions,
                noise_var=r,
                bias_bound=bias,
                nominal_state=states[k],
                nominal_prev=states[k - 1],
                input_prev=inputs[k - 1],
                p_post=p,
                time=t,
            )
        )
    return out


def linear_schedule(a, b, c, gain_l, feedback_k, steps: int) -> list[ScheduleEntry]:
    """Constant-matrix schedule, handy for LTI analyses."""
    a, b, c = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (a, b, c))
    gain_l = np.atleast_2d(np.asarray(gain_l, dtype=float))
    feedback_k = np.atleast_2d(np.asarray(feedback_k, dtype=float))
    return [ScheduleEntry(a, b, c, gain_l, feedback_k) for _ in range(steps)]
