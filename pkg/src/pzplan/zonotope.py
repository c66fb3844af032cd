"""Zonotopes and probabilistic zonotopes.

A zonotope ``Z(c, G)`` is the set ``{c + G @ beta : beta in [-1, 1]^r}``.  A
probabilistic zonotope ``Z(c, G, S)`` is a Gaussian ``N(mu, S)`` whose mean
``mu`` is only known to lie in ``Z(c, G)``.  Both are immutable; every
operation in this module returns a new object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, linprog
from scipy.special import gammainc

__all__ = [
    "THREE_SIGMA",
    "ConfidenceConfig",
    "ProbabilisticZonotope",
    "Zonotope",
    "chi2_quantile",
    "confidence_zonotope",
    "contains",
    "contains_points_2d",
    "covariation",
    "facet_normals",
    "intersects_2d",
    "linear_map",
    "minkowski_sum",
    "polygon_is_convex",
    "project",
    "reduce_order",
    "reduce_order_pz",
    "zonotope_norm",
    "zonotopes_intersect",
]

#: Probability mass of a 1D Gaussian within +/- 3 sigma.  Used as the
#: confidence of the "3 sigma" sets; the chi-square quantile for the set
#: dimension is then taken at this probability.
THREE_SIGMA = math.erf(3.0 / math.sqrt(2.0))

_SYM_TOL = 1e-9
_PSD_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_generators(generators, n: int) -> np.ndarray:
    if generators is None:
        return np.zeros((n, 0))
    g = np.array(generators, dtype=float)
    if g.size == 0:
        return np.zeros((n, 0))
    if g.ndim == 1:
        g = g.reshape(n, -1)
    return g


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Center ``(n,)`` plus generator matrix ``(n, r)``."""

    center: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        g = _as_generators(self.generators, c.size)
        if g.ndim != 2 or g.shape[0] != c.size:
            raise ValueError(
                f"generator matrix shape {g.shape} does not match dimension {c.size}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(g))):
            raise ValueError("zonotope entries must be finite")
        object.__setattr__(self, "center", _readonly(c))
        object.__setattr__(self, "generators", _readonly(g))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    def interval_hull(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.abs(self.generators).sum(axis=1)
        return self.center - r, self.center + r

    def radius(self) -> np.ndarray:
        """Half-widths of the interval hull."""
        return np.abs(self.generators).sum(axis=1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Points ``c + G beta`` with ``beta`` uniform on the unit cube, shape ``(size, n)``."""
        beta = rng.uniform(-1.0, 1.0, size=(size, self.num_generators))
        return self.center + beta @ self.generators.T

    def vertices_2d(self) -> np.ndarray:
        """Counter-clockwise vertex loop of a 2D zonotope, shape ``(m, 2)``."""
        if self.dim != 2:
            raise ValueError("vertices_2d needs a 2D zonotope")
        g = self.generators[:, np.linalg.norm(self.generators, axis=0) > 0]
        if g.shape[1] == 0:
            return self.center.reshape(1, 2).copy()
        # Orient every generator into the upper half plane, sort by angle and
        # walk the boundary starting from the lowest vertex.
        g = np.where((g[1] < 0) | ((g[1] == 0) & (g[0] < 0)), -g, g)
        g = g[:, np.argsort(np.arctan2(g[1], g[0]))]
        start = self.center - g.sum(axis=1)
        steps = np.concatenate([2 * g, -2 * g], axis=1).T
        return start + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)[:-1]])


@dataclass(frozen=True, eq=False)
class ProbabilisticZonotope:
    """Gaussian ``N(mu, covariance)`` with ``mu`` bounded by ``Z(center, generators)``."""

    center: np.ndarray
    generators: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        n = c.size
        g = _as_generators(self.generators, n)
        s = np.zeros((n, n)) if self.covariance is None else np.array(self.covariance, dtype=float)
        if s.ndim == 0:
            s = s * np.eye(n)
        if g.ndim != 2 or g.shape[0] != n:
            raise ValueError(f"generator matrix shape {g.shape} does not match dimension {n}")
        if s.shape != (n, n):
            raise ValueError(f"covariance shape {s.shape} does not match dimension {n}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(g)) and np.all(np.isfinite(s))):
            raise ValueError("probabilistic zonotope entries must be finite")
        scale = max(1.0, float(np.max(np.abs(s)))) if n else 1.0
        if np.max(np.abs(s - s.T), initial=0.0) > _SYM_TOL * scale:
            raise ValueError("covariance is not symmetric")
        d = np.diag(s)
        if n and np.any(s) and (np.count_nonzero(s - np.diag(d)) or d.min() < 0):
            lam = np.linalg.eigvalsh(s)
            lam_min = lam[0]
            if lam_min < -_PSD_TOL * np.abs(lam).max():
                raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {lam_min:.3g})")
        object.__setattr__(self, "center", _readonly(c))
        object.__setattr__(self, "generators", _readonly(g))
        object.__setattr__(self, "covariance", _readonly(s))

    @classmethod
    def _derived(cls, center, generators, covariance) -> "ProbabilisticZonotope":
        """Build from arrays computed out of already validated sets, skipping the checks."""
        out = object.__new__(cls)
        object.__setattr__(out, "center", _readonly(np.asarray(center, dtype=float)))
        object.__setattr__(out, "generators", _readonly(np.asarray(generators, dtype=float)))
        object.__setattr__(out, "covariance", _readonly(np.asarray(covariance, dtype=float)))
        return out

    @classmethod
    def point(cls, center) -> "ProbabilisticZonotope":
        c = np.asarray(center, dtype=float).reshape(-1)
        return cls(c, None, np.zeros((c.size, c.size)))

    @classmethod
    def gaussian(cls, center, covariance) -> "ProbabilisticZonotope":
        return cls(center, None, covariance)

    @classmethod
    def zero(cls, n: int) -> "ProbabilisticZonotope":
        return cls(np.zeros(n), None, np.zeros((n, n)))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    def bounded_part(self) -> Zonotope:
        return Zonotope(self.center, self.generators)

    def translate(self, offset) -> "ProbabilisticZonotope":
        off = np.asarray(offset, dtype=float)
        if off.shape not in ((), (self.dim,)) or not np.all(np.isfinite(off)):
            raise ValueError("offset must be a finite vector of the set dimension")
        return ProbabilisticZonotope._derived(self.center + off, self.generators, self.covariance)


@dataclass(frozen=True)
class ConfidenceConfig:
    """Confidence level and set dimension used to scale the covariance generators."""

    confidence: float
    dimension: int

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must lie strictly in (0, 1), got {self.confidence}")
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")

    @property
    def alpha(self) -> float:
        """Square root of the chi-square quantile at ``confidence``."""
        return math.sqrt(chi2_quantile(self.confidence, self.dimension))


@lru_cache(maxsize=256)
def chi2_quantile(p: float, dof: int) -> float:
    """Inverse CDF of the chi-square distribution.

    Root of ``P(dof/2, x/2) - p`` where ``P`` is the regularized lower
    incomplete gamma function, bracketed by doubling the upper end.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    k = 0.5 * dof
    hi = max(1.0, float(dof))
    while gammainc(k, 0.5 * hi) < p:
        hi *= 2.0
    return brentq(lambda x: gammainc(k, 0.5 * x) - p, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def minkowski_sum(a: ProbabilisticZonotope, b: ProbabilisticZonotope) -> ProbabilisticZonotope:
    """Minkowski sum of two probabilistic zonotopes.

    The caller is responsible for ``a`` and ``b`` being independent: the
    covariances are simply added, so any correlation between the two
    Gaussian parts is silently dropped.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return ProbabilisticZonotope._derived(
        a.center + b.center,
        np.concatenate([a.generators, b.generators], axis=1),
        a.covariance + b.covariance,
    )


def linear_map(t, p: ProbabilisticZonotope) -> ProbabilisticZonotope:
    """Image of ``p`` under the matrix ``t``; the covariance is re-symmetrized."""
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if t.shape[1] != p.dim:
        raise ValueError(f"matrix with {t.shape[1]} columns cannot act on dimension {p.dim}")
    if not np.all(np.isfinite(t)):
        raise ValueError("linear map must be finite")
    s = t @ p.covariance @ t.T
    return ProbabilisticZonotope._derived(t @ p.center, t @ p.generators, 0.5 * (s + s.T))


def confidence_zonotope(p: ProbabilisticZonotope, cfg: ConfidenceConfig | float) -> Zonotope:
    """Zonotope enclosing ``p`` at a confidence level.

    The bounded generators are kept and one generator ``alpha sqrt(lam_i) v_i``
    is appended per nonzero eigenpair of the covariance, where ``alpha**2``
    is the chi-square quantile for ``p.dim`` degrees of freedom.
    """
    if not isinstance(cfg, ConfidenceConfig):
        cfg = ConfidenceConfig(float(cfg), p.dim)
    elif cfg.dimension != p.dim:
        raise ValueError(f"confidence config is for dimension {cfg.dimension}, set has {p.dim}")
    s = p.covariance
    if not np.any(s):
        return Zonotope(p.center, p.generators)
    lam, vec = np.linalg.eigh(s)
    scale = lam.max()
    keep = lam > 1e-14 * scale
    extra = cfg.alpha * vec[:, keep] * np.sqrt(lam[keep])
    return Zonotope(p.center, np.concatenate([p.generators, extra], axis=1))


def covariation(z: Zonotope) -> float:
    """``trace(G^T G)``: the sum of squared generator entries."""
    return float(np.sum(np.square(z.generators)))


def _support_axes_2d(g: np.ndarray) -> np.ndarray:
    # facet normals (generators rotated by 90 degrees) plus the generator
    # directions themselves, which matter only for flat zonotopes
    norms = np.linalg.norm(g, axis=0)
    g = g[:, norms > 0] / norms[norms > 0]
    return np.concatenate([np.stack([-g[1], g[0]]), g], axis=1)


def contains(z: Zonotope, point, tol: float = 1e-9) -> bool:
    """Point membership test.

    2D sets use the halfspace representation; higher dimensions solve a
    feasibility LP over the generator coefficients.
    """
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.size != z.dim:
        raise ValueError(f"point dimension {x.size} does not match set dimension {z.dim}")
    d = x - z.center
    scale = tol * max(1.0, float(np.abs(z.generators).sum()), float(np.abs(z.center).max(initial=0.0)))
    if z.num_generators == 0 or not np.any(z.generators):
        return bool(np.all(np.abs(d) <= scale))
    if z.dim == 1:
        return bool(abs(d[0]) <= np.abs(z.generators).sum() + scale)
    if z.dim == 2:
        axes = _support_axes_2d(z.generators)
        width = np.abs(axes.T @ z.generators).sum(axis=1)
        return bool(np.all(np.abs(axes.T @ d) <= width + scale))
    r = z.num_generators
    res = linprog(
        np.zeros(r), A_eq=z.generators, b_eq=d, bounds=[(-1.0, 1.0)] * r, method="highs"
    )
    if res.status == 0:
        return True
    # The LP is strict about equality; retry with a slack box of size scale.
    res = linprog(
        np.zeros(r),
        A_ub=np.vstack([z.generators, -z.generators]),
        b_ub=np.concatenate([d + scale, -d + scale]),
        bounds=[(-1.0, 1.0)] * r,
        method="highs",
    )
    return res.status == 0


def contains_points_2d(z: Zonotope, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vectorized 2D membership for an array of points ``(m, 2)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts - z.center
    scale = tol * max(1.0, float(np.abs(z.generators).sum()), float(np.abs(z.center).max(initial=0.0)))
    if z.num_generators == 0 or not np.any(z.generators):
        return np.all(np.abs(d) <= scale, axis=1)
    axes = _support_axes_2d(z.generators)
    width = np.abs(axes.T @ z.generators).sum(axis=1)
    return np.all(np.abs(d @ axes) <= width + scale, axis=1)


def facet_normals(z: Zonotope) -> tuple[np.ndarray, np.ndarray]:
    """Unit facet normals ``(k, n)`` and half-widths ``(k,)`` of a full-dimensional 2D or 3D zonotope.

    Membership is ``|normals @ (x - c)| <= widths`` for every row.
    """
    g = z.generators[:, np.linalg.norm(z.generators, axis=0) > 0]
    if z.dim == 2:
        nrm = np.stack([-g[1], g[0]], axis=1)
    elif z.dim == 3:
        i, j = np.triu_indices(g.shape[1], k=1)
        nrm = np.cross(g[:, i].T, g[:, j].T)
    else:
        raise ValueError("facet normals are implemented for 2D and 3D sets only")
    length = np.linalg.norm(nrm, axis=1)
    big = length > 1e-12 * max(1e-300, float(length.max(initial=0.0)))
    nrm = nrm[big] / length[big, None]
    if np.linalg.matrix_rank(g) < z.dim or not len(nrm):
        raise ValueError("zonotope is not full-dimensional")
    return nrm, np.abs(nrm @ g).sum(axis=1)


def zonotope_norm(z: Zonotope, points, angle_axes: Sequence[int] = ()) -> np.ndarray:
    """Smallest scale ``s`` with ``x`` in ``c + s (Z - c)``, for each row of ``points``.

    Coordinates listed in ``angle_axes`` are compared modulo ``2 pi``.
    Values ``<= 1`` mean membership.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts - z.center
    for a in angle_axes:
        d[:, a] = np.remainder(d[:, a] + np.pi, 2 * np.pi) - np.pi
    nrm, width = facet_normals(z)
    return np.max(np.abs(d @ nrm.T) / width, axis=1)


def polygon_is_convex(poly: np.ndarray) -> bool:
    v = np.asarray(poly, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = max(1e-300, float(np.max(np.abs(cross))))
    cross = np.where(np.abs(cross) <= 1e-12 * scale, 0.0, cross)
    if not (np.all(cross >= 0) or np.all(cross <= 0)) or not np.any(cross != 0):
        return False
    # same-sign turns also hold for self-intersecting stars; require one winding
    nxt = np.roll(e, -1, axis=0)
    turning = np.arctan2(cross, np.einsum("ij,ij->i", e, nxt)).sum()
    return bool(abs(abs(turning) - 2 * np.pi) < 1e-6)


def intersects_2d(z: Zonotope, poly, tol: float = 1e-9) -> bool:
    """Separating-axis test between a 2D zonotope and a convex polygon.

    Touching boundaries count as an intersection.
    """
    v = np.asarray(poly, dtype=float)
    if z.dim != 2 or v.ndim != 2 or v.shape[1] != 2:
        raise ValueError("intersects_2d needs a 2D zonotope and an (m, 2) polygon")
    if v.shape[0] < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if not polygon_is_convex(v):
        raise ValueError("polygon is not convex")
    edges = np.roll(v, -1, axis=0) - v
    normals = np.stack([-edges[:, 1], edges[:, 0]])
    normals = normals[:, np.linalg.norm(normals, axis=0) > 0]
    normals = normals / np.linalg.norm(normals, axis=0)
    axes = np.concatenate([normals, _support_axes_2d(z.generators)], axis=1)
    zc = axes.T @ z.center
    zr = np.abs(axes.T @ z.generators).sum(axis=1)
    proj = v @ axes
    slack = tol * max(1.0, float(np.abs(v).max()), float(np.abs(z.center).max()))
    separated = (zc + zr < proj.min(axis=0) - slack) | (proj.max(axis=0) < zc - zr - slack)
    return not bool(np.any(separated))


def zonotopes_intersect(a: Zonotope, b: Zonotope, tol: float = 1e-9) -> bool:
    """True iff two zonotopes share a point (closed sets).

    ``a`` and ``b`` intersect iff ``c_a - c_b`` lies in ``Z(0, [G_a, G_b])``.
    """
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    return contains(
        Zonotope(np.zeros(a.dim), np.concatenate([a.generators, b.generators], axis=1)),
        a.center - b.center,
        tol=tol,
    )


def reduce_order(z: Zonotope, max_generators: int) -> Zonotope:
    """Over-approximate ``z`` with at most ``max_generators`` generators.

    The ``max_generators - n`` longest generators are kept; the rest are
    replaced by their interval hull (``n`` axis-aligned generators).
    """
    n = z.dim
    if max_generators < n:
        raise ValueError(f"max_generators ({max_generators}) must be at least the dimension ({n})")
    g = z.generators
    if g.shape[1] <= max_generators:
        return z
    order = np.argsort(-np.linalg.norm(g, axis=0), kind="stable")
    keep = g[:, order[: max_generators - n]]
    box = np.diag(np.abs(g[:, order[max_generators - n :]]).sum(axis=1))
    return Zonotope(z.center, np.concatenate([keep, box], axis=1))


def reduce_order_pz(p: ProbabilisticZonotope, max_generators: int | None) -> ProbabilisticZonotope:
    if max_generators is None or p.num_generators <= max_generators:
        return p
    z = reduce_order(p.bounded_part(), max_generators)
    return ProbabilisticZonotope._derived(z.center, z.generators, p.covariance)


def project(p: ProbabilisticZonotope, axes: Sequence[int] = (0, 1)) -> ProbabilisticZonotope:
    """Coordinate projection, e.g. onto the planar position of a vehicle state."""
    sel = np.zeros((len(axes), p.dim))
    sel[np.arange(len(axes)), list(axes)] = 1.0
    return linear_map(sel, p)
