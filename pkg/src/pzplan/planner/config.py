"""Planner configuration."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

from ..zonotope import THREE_SIGMA

__all__ = ["PlannerConfig", "config_hash"]


@dataclass(frozen=True)
class PlannerConfig:
    """Search, graph and CONNECT settings.

    ``delta`` bounds the per-step collision probability; collision checks use
    confidence sets at ``1 - delta``.  The grid is ``grid_shape`` nodes per
    axis starting at ``grid_origin``; when the shape is omitted it is derived
    from the scene extent.
    """

    delta: float = 1.0 - THREE_SIGMA
    spacing: float = 100.0
    headings_deg: tuple[float, ...] = (0.0, 90.0, 180.0, 270.0)
    grid_origin: tuple[float, float] = (0.0, 0.0)
    grid_shape: tuple[int, int] | None = None
    v_nominal: float = 10.0
    v_max: float = 15.0
    omega_max: float = 0.5
    turn_radius: float = 25.0
    length_factor: float = 2.0
    dt: float = 0.2
    dominance_slack: float = 0.01
    lqr_state_weights: tuple[float, float, float] = (1.0, 1.0, 10.0)
    lqr_input_weights: tuple[float, float] = (0.1, 1.0)
    max_expansions: int = 5000
    epoch: float = 0.0
    initial_cov: tuple[float, float, float] = (1.0, 1.0, 0.01)
    corridor_margin: float = 0.0
    sky_time_quantum: float = 1.0
    heuristic: bool = True

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if not self.headings_deg:
            raise ValueError("need at least one heading per node")
        if self.v_nominal <= 0 or self.v_max < self.v_nominal:
            raise ValueError("need 0 < v_nominal <= v_max")
        if self.omega_max <= 0 or self.turn_radius <= 0 or self.dt <= 0:
            raise ValueError("omega_max, turn_radius and dt must be positive")
        if self.v_nominal / self.turn_radius > self.omega_max:
            raise ValueError("turn radius too tight for omega_max at the nominal speed")
        if self.dominance_slack < 0:
            raise ValueError("dominance slack must be nonnegative")
        if self.corridor_margin < 0 or self.sky_time_quantum < 0:
            raise ValueError("corridor margin and sky time quantum must be nonnegative")
        if len(self.initial_cov) != 3 or min(self.initial_cov) < 0:
            raise ValueError("initial_cov needs three nonnegative variances")

    @property
    def confidence(self) -> float:
        return 1.0 - self.delta

    @property
    def headings(self) -> tuple[float, ...]:
        return tuple(math.radians(h) for h in self.headings_deg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown planner settings: {sorted(unknown)}")
        kw = {}
        for k, v in data.items():
            if isinstance(v, list):
                v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
            kw[k] = v
        return cls(**kw)


def config_hash(*parts) -> str:
    """Stable sha256 over JSON-serializable configuration pieces."""
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
