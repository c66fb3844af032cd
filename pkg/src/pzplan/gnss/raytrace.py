"""Line-of-sight and single-bounce multipath classification in a 2.5D scene."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scene import Building, UrbanScene

__all__ = ["Signal", "SignalKind", "classify_signal", "segment_blocked"]


class SignalKind(enum.Enum):
    OPEN = "open"
    BLOCKED = "blocked"
    MULTIPATH = "multipath"


@dataclass(frozen=True)
class Signal:
    kind: SignalKind
    path_deltas: tuple[float, ...] = ()


def _clip(a: np.ndarray, b: np.ndarray, poly: np.ndarray) -> tuple[float, float] | None:
    """Parameter interval of segment ``a -> b`` whose horizontal trace lies in ``poly``."""
    t0, t1 = 0.0, 1.0
    d = b[:2] - a[:2]
    nxt = np.roll(poly, -1, axis=0)
    for p, q in zip(poly, nxt):
        e = q - p
        n = np.array([e[1], -e[0]])
        num = n @ (a[:2] - p)
        den = n @ d
        if abs(den) < 1e-300:
            if num > 0:
                return None
            continue
        t = -num / den
        if den > 0:
            t1 = min(t1, t)
        else:
            t0 = max(t0, t)
        if t0 > t1:
            return None
    return t0, t1


def segment_blocked(a, b, buildings, skip: Building | None = None, eps: float = 1e-9) -> bool:
    """True if the 3D segment ``a -> b`` passes through any extruded footprint."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = np.linalg.norm(b[:2] - a[:2])
    for bld in buildings:
        if bld is skip:
            continue
        span = _clip(a, b, bld.footprint)
        if span is None or (span[1] - span[0]) * length <= eps:
            continue
        z0 = a[2] + span[0] * (b[2] - a[2])
        z1 = a[2] + span[1] * (b[2] - a[2])
        if min(z0, z1) < bld.height - eps:
            return True
    return False


@lru_cache(maxsize=64)
def _facades(scene: UrbanScene) -> list[tuple[Building, np.ndarray, np.ndarray, np.ndarray]]:
    # edges shared by two pieces of the same decomposed footprint are internal
    seen = {}
    for bld in scene.buildings:
        for p, q, _ in bld.edges():
            seen.setdefault(bld.source_index, set()).add((tuple(np.round(p, 9)), tuple(np.round(q, 9))))
    out = []
    for bld in scene.buildings:
        edges = seen[bld.source_index]
        for p, q, n in bld.edges():
            if (tuple(np.round(q, 9)), tuple(np.round(p, 9))) in edges:
                continue
            out.append((bld, p, q, n))
    return out


def classify_signal(receiver_xy, sat_enu, scene: UrbanScene) -> Signal:
    """Classify the signal from one satellite at a receiver flying at the scene altitude.

    Blocked when the direct ray crosses a building below its roof.  Otherwise
    every vertical facade is tried as a specular mirror (image method); each
    unobstructed reflection contributes its extra path length.
    """
    p = np.array([receiver_xy[0], receiver_xy[1], scene.altitude], dtype=float)
    s = np.asarray(sat_enu, dtype=float)
    if segment_blocked(p, s, scene.buildings):
        return Signal(SignalKind.BLOCKED)
    direct = np.linalg.norm(s - p)
    deltas = []
    for bld, a, b, n in _facades(scene):
        dp = n @ (p[:2] - a)
        ds = n @ (s[:2] - a)
        if dp <= 0 or ds <= 0:
            continue
        image = s.copy()
        image[:2] -= 2 * ds * n
        t = dp / (dp + ds)
        q = p + t * (image - p)
        edge = b - a
        u = (q[:2] - a) @ edge / (edge @ edge)
        if not (0.0 <= u <= 1.0 and 0.0 <= q[2] <= bld.height):
            continue
        q_out = q.copy()
        q_out[:2] += 1e-6 * n
        if segment_blocked(q_out, p, scene.buildings, skip=bld):
            continue
        if segment_blocked(q_out, s, scene.buildings, skip=bld):
            continue
        deltas.append(float(np.linalg.norm(s - q) + np.linalg.norm(q - p) - direct))
    if deltas:
        return Signal(SignalKind.MULTIPATH, tuple(sorted(deltas)))
    return Signal(SignalKind.OPEN)
