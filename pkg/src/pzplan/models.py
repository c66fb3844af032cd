"""Planar Dubins vehicle, pseudorange/heading measurements, and remainder bounds.

All functions take plain arrays: a state is ``(x1, x2, theta)`` and an input
is ``(v, omega)``.  :class:`VehicleState` and :class:`ControlInput` are
named tuples, so they can be passed anywhere an array is expected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "ControlInput",
    "NoiseConfig",
    "RemainderGaussian",
    "VehicleState",
    "jacobian_measurement",
    "jacobians_dynamics",
    "measurement",
    "remainder_bound_dynamics",
    "remainder_bound_measurement",
    "remainder_to_gaussian",
    "step_dynamics",
    "wrap_angle",
]


def wrap_angle(theta):
    """Map angles onto ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)


class VehicleState(NamedTuple):
    x1: float
    x2: float
    theta: float

    def normalized(self) -> "VehicleState":
        return VehicleState(self.x1, self.x2, float(wrap_angle(self.theta)))


class ControlInput(NamedTuple):
    v: float
    omega: float


@dataclass(frozen=True)
class NoiseConfig:
    """Motion and sensing noise levels.

    ``q`` is the motion-error covariance, ``sigma_rho`` the zenith pseudorange
    variance (m^2), ``heading_var`` the compass variance (rad^2).
    """

    q: np.ndarray = None
    sigma_rho: float = 5.0
    heading_var: float = 0.001
    dt: float = 0.2

    def __post_init__(self):
        q = np.diag([0.01, 0.01, 0.001]) if self.q is None else np.array(self.q, dtype=float)
        if q.ndim == 1:
            q = np.diag(q)
        if q.shape != (3, 3) or np.max(np.abs(q - q.T)) > 1e-12 or np.linalg.eigvalsh(q)[0] < -1e-12:
            raise ValueError("q must be a symmetric positive semidefinite 3x3 matrix")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sigma_rho <= 0 or self.heading_var <= 0:
            raise ValueError("measurement variances must be positive")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def scaled(self, factor: float) -> "NoiseConfig":
        return NoiseConfig(self.q * factor, self.sigma_rho * factor, self.heading_var * factor, self.dt)


@dataclass(frozen=True, eq=False)
class RemainderGaussian:
    """Zero-mean Gaussian standing in for a linearization remainder."""

    covariance: np.ndarray


def step_dynamics(x, u, dt: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    theta = x[..., 2]
    v = u[..., 0]
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (3,)))
    out[..., 0] = x[..., 0] + v * np.cos(theta) * dt
    out[..., 1] = x[..., 1] + v * np.sin(theta) * dt
    out[..., 2] = wrap_angle(theta + u[..., 1] * dt)
    return out


def jacobians_dynamics(x, u, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """State and input Jacobians ``(A, B)`` of :func:`step_dynamics`."""
    theta = float(np.asarray(x, dtype=float)[2])
    v = float(np.asarray(u, dtype=float)[0])
    c, s = np.cos(theta), np.sin(theta)
    a = np.array([[1.0, 0.0, -v * s * dt], [0.0, 1.0, v * c * dt], [0.0, 0.0, 1.0]])
    b = np.array([[c * dt, 0.0], [s * dt, 0.0], [0.0, dt]])
    return a, b


def _sat_array(sats, altitude: float) -> np.ndarray:
    s = np.asarray(sats, dtype=float)
    if s.size == 0:
        return np.zeros((0, 3))
    s = np.atleast_2d(s)
    if s.shape[1] == 2:
        s = np.column_stack([s, np.full(len(s), altitude)])
    return s


def _receiver(x, altitude: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 0], x[..., 1], np.full(x.shape[:-1], altitude)], axis=-1)


def measurement(x, sats, altitude: float = 0.0) -> np.ndarray:
    """Ranges to every satellite followed by the heading.

    ``sats`` holds local east-north-up satellite positions ``(N, 3)`` (or
    ``(N, 2)``, taken at the receiver altitude).  ``x`` may carry leading
    batch dimensions.
    """
    s = _sat_array(sats, altitude)
    x = np.asarray(x, dtype=float)
    p = _receiver(x, altitude)
    ranges = np.linalg.norm(s - p[..., None, :], axis=-1)
    return np.concatenate([ranges, x[..., 2:3]], axis=-1)


def jacobian_measurement(x, sats, altitude: float = 0.0) -> np.ndarray:
    s = _sat_array(sats, altitude)
    p = _receiver(x, altitude)
    los = s - p
    r = np.linalg.norm(los, axis=1)
    if np.any(r <= 1.0):
        raise ValueError("degenerate geometry: satellite within 1 m of the receiver")
    c = np.zeros((len(s) + 1, 3))
    c[:-1, 0] = -los[:, 0] / r
    c[:-1, 1] = -los[:, 1] / r
    c[-1, 2] = 1.0
    return c


def _extreme_abs(g, candidates) -> float:
    return float(np.max(np.abs(g(np.asarray(candidates, dtype=float)))))


def _critical_points(offset: float, period_shift: float, half_width: float) -> list[float]:
    """Points ``t = offset + k*pi`` (or ``2k*pi`` steps) inside ``[-w, w]`` plus the endpoints."""
    pts = [-half_width, half_width]
    k0 = int(np.ceil((-half_width - offset) / period_shift))
    k1 = int(np.floor((half_width - offset) / period_shift))
    pts.extend(offset + k * period_shift for k in range(k0, k1 + 1))
    return pts


def _trig_remainder_maxima(theta0: float, phase: float, half_width: float) -> tuple[float, float]:
    """Maxima over ``|t| <= w`` of the two pieces of the remainder of ``v * cos(theta - phase)``.

    Returns ``max |g(t0+t) - g(t0) - g'(t0) t|`` and ``max |g(t0+t) - g(t0)|``
    for ``g = cos(. - phase)``, both found exactly from their critical points.
    """
    a = theta0 - phase
    g0, d0 = np.cos(a), -np.sin(a)
    # first piece: derivative vanishes at t = 0 and t = pi - 2a (mod 2 pi)
    crit1 = _critical_points(np.pi - 2 * a, 2 * np.pi, half_width) + [0.0]
    m1 = _extreme_abs(lambda t: np.cos(a + t) - g0 - d0 * t, crit1)
    # second piece: extremes where sin(a + t) = 0
    crit2 = _critical_points(-a, np.pi, half_width)
    m2 = _extreme_abs(lambda t: np.cos(a + t) - g0, crit2)
    return m1, m2


def remainder_bound_dynamics(state_radius, input_radius, x_nom, u_nom, dt: float) -> np.ndarray:
    """Per-coordinate bound on the linearization remainder of the dynamics.

    Only ``x1 = v cos(theta) dt`` and ``x2 = v sin(theta) dt`` are nonlinear.
    Writing ``g`` for cos or sin, their remainder splits exactly into
    ``v0 [g(th0+t) - g(th0) - g'(th0) t] + dv [g(th0+t) - g(th0)]``; each
    bracket is maximized over the heading interval in closed form, so the
    bound is sound and close to the true worst case.  It never exceeds the
    Hessian quadratic form ``0.5 gamma^T |H| gamma``.
    """
    gx = np.abs(np.asarray(state_radius, dtype=float))
    gu = np.abs(np.asarray(input_radius, dtype=float))
    g_theta, g_v = float(gx[2]), float(gu[0])
    v0 = abs(float(u_nom[0]))
    theta0 = float(x_nom[2])
    out = np.zeros(3)
    for i, phase in enumerate((0.0, np.pi / 2)):
        m1, m2 = _trig_remainder_maxima(theta0, phase, g_theta)
        out[i] = dt * (v0 * m1 + g_v * m2)
    # guard the closed-form maxima against round-off in the cancellations
    return out * (1.0 + 1e-9)


def remainder_bound_measurement(position_radius, x_nom, sats, altitude: float = 0.0) -> np.ndarray:
    """Per-measurement remainder bound for the ranges; the heading row is exact.

    The horizontal Hessian of a range is ``(I - u u^T) / r``, whose entries
    are bounded by ``1/r`` on the diagonal and ``1/(2r)`` off it, with ``r``
    shrunk by the box radius.
    """
    g = np.abs(np.asarray(position_radius, dtype=float))
    s = _sat_array(sats, altitude)
    r = np.linalg.norm(s - _receiver(x_nom, altitude), axis=1) - np.hypot(g[0], g[1])
    if np.any(r <= 0):
        raise ValueError("deviation box reaches a satellite")
    quad = g[0] ** 2 + g[1] ** 2 + g[0] * g[1]
    return np.concatenate([0.5 * quad / r, [0.0]])


def remainder_to_gaussian(bound, divisor: float = 3.0) -> RemainderGaussian:
    """Diagonal Gaussian with ``sigma_i = bound_i / divisor``."""
    sigma = np.abs(np.asarray(bound, dtype=float)) / divisor
    return RemainderGaussian(np.diag(sigma**2))
