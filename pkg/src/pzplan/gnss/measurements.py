"""Satellite visibility, noise models, and simulated pseudorange/heading measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..models import measurement
from .almanac import Constellation
from .geometry import ecef_to_enu, elevation_azimuth
from .multipath import MultipathEnvelope, multipath_bias_bound
from .raytrace import Signal, SignalKind, classify_signal
from .scene import UrbanScene

__all__ = [
    "BIAS_POLICIES",
    "GnssEnvironment",
    "SatelliteView",
    "UniformPerEpoch",
    "WorstCaseConstant",
    "ZeroBias",
    "make_bias_policy",
    "pseudorange_noise_var",
    "simulate_measurements",
]

SIGMA_RHO_ZENITH = 5.0  # m^2
HEADING_VAR = 0.001  # rad^2


def pseudorange_noise_var(elevation: float, sigma_rho: float = SIGMA_RHO_ZENITH, mask_deg: float = 10.0) -> float:
    """Elevation-weighted pseudorange variance ``sigma_rho / sin(el)^2``."""
    if elevation < math.radians(mask_deg) - 1e-12:
        raise ValueError(f"elevation {math.degrees(elevation):.2f} deg is below the {mask_deg} deg mask")
    return sigma_rho / math.sin(elevation) ** 2


@dataclass(frozen=True, eq=False)
class SatelliteView:
    """Usable satellites at one receiver position and epoch.

    ``positions`` are ENU (m); ``noise_var`` are the pseudorange variances and
    ``bias_bound`` the multipath bias magnitudes, one per satellite.
    """

    prns: tuple[int, ...]
    positions: np.ndarray
    elevations: np.ndarray
    noise_var: np.ndarray
    bias_bound: np.ndarray
    signals: tuple[Signal, ...] = ()

    @property
    def count(self) -> int:
        return len(self.prns)

    @classmethod
    def empty(cls) -> "SatelliteView":
        return cls((), np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0))


@dataclass(eq=False)
class GnssEnvironment:
    """Scene, constellation and noise models bundled for visibility queries."""

    scene: UrbanScene
    constellation: Constellation
    envelope: MultipathEnvelope = field(default_factory=MultipathEnvelope)
    sigma_rho: float = SIGMA_RHO_ZENITH
    heading_var: float = HEADING_VAR

    def sat_positions_enu(self, t: float) -> dict[int, np.ndarray]:
        return {prn: ecef_to_enu(pos, self.scene.anchor) for prn, pos in self.constellation.positions(t).items()}

    def view(self, position, t: float) -> SatelliteView:
        rx = np.array([position[0], position[1], self.scene.altitude], dtype=float)
        mask = math.radians(self.scene.elevation_mask_deg)
        prns, pos, els, var, bias, sigs = [], [], [], [], [], []
        for prn, enu in sorted(self.sat_positions_enu(t).items()):
            el, _ = elevation_azimuth(rx, enu)
            if el < mask:
                continue
            sig = classify_signal(rx[:2], enu, self.scene)
            if sig.kind is SignalKind.BLOCKED:
                continue
            b = max((multipath_bias_bound(dl, self.envelope) for dl in sig.path_deltas), default=0.0)
            prns.append(prn)
            pos.append(enu)
            els.append(el)
            var.append(pseudorange_noise_var(el, self.sigma_rho, self.scene.elevation_mask_deg))
            bias.append(b)
            sigs.append(sig)
        if not prns:
            return SatelliteView.empty()
        return SatelliteView(tuple(prns), np.array(pos), np.array(els), np.array(var), np.array(bias), tuple(sigs))


class ZeroBias:
    name = "zero"

    def draw(self, prns, bound, rng) -> np.ndarray:
        return np.zeros(len(prns))


class WorstCaseConstant:
    """Bias of full magnitude with a random sign fixed per satellite for the whole flight."""

    name = "worst-case-constant"

    def __init__(self):
        self._signs: dict[int, float] = {}

    def draw(self, prns, bound, rng) -> np.ndarray:
        signs = []
        for prn in prns:
            if prn not in self._signs:
                self._signs[prn] = 1.0 if rng.random() < 0.5 else -1.0
            signs.append(self._signs[prn])
        return np.asarray(signs) * np.asarray(bound, dtype=float)


class UniformPerEpoch:
    """Fresh bias ``U[-b, b]`` every epoch."""

    name = "uniform-per-epoch"

    def draw(self, prns, bound, rng) -> np.ndarray:
        b = np.asarray(bound, dtype=float)
        return rng.uniform(-1.0, 1.0, size=b.size) * b


BIAS_POLICIES = {cls.name: cls for cls in (ZeroBias, WorstCaseConstant, UniformPerEpoch)}


def make_bias_policy(name: str):
    try:
        return BIAS_POLICIES[name]()
    except KeyError:
        raise ValueError(f"unknown bias policy {name!r}; choose from {sorted(BIAS_POLICIES)}") from None


def simulate_measurements(
    x_true,
    env: GnssEnvironment,
    t: float,
    policy,
    rng: np.random.Generator,
    noise_scale: float = 1.0,
) -> tuple[np.ndarray, SatelliteView, np.ndarray]:
    """Noisy pseudoranges (zero clock bias) and heading at the true state.

    Returns ``(z, view, biases)``; ``z`` has one entry per usable satellite
    followed by the heading.
    """
    view = env.view(x_true[:2], t)
    biases = policy.draw(view.prns, view.bias_bound, rng)
    if np.any(np.abs(biases) > view.bias_bound + 1e-12):
        raise AssertionError("bias draw exceeds its bound")
    z = measurement(x_true, view.positions, env.scene.altitude)
    sd = np.sqrt(np.concatenate([view.noise_var, [env.heading_var]])) * noise_scale
    z = z + sd * rng.standard_normal(z.size)
    z[:-1] += biases
    return z, view, biases
