"""Code-tracking multipath error envelope for an early-late discriminator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CA_CHIP_LENGTH", "MultipathEnvelope", "multipath_bias_bound"]

CA_CHIP_LENGTH = 299792458.0 / 1.023e6  # metres per GPS C/A chip


@dataclass(frozen=True)
class MultipathEnvelope:
    """Correlator spacing ``spacing`` (chips), chip length (m), reflected/direct amplitude ratio."""

    spacing: float = 0.25
    chip_length: float = CA_CHIP_LENGTH
    amplitude: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.spacing <= 1.0:
            raise ValueError("correlator spacing must lie in (0, 1] chips")
        if not 0.0 < self.amplitude <= 1.0:
            raise ValueError("amplitude ratio must lie in (0, 1]")

    @property
    def plateau(self) -> float:
        """Largest tracking error, metres."""
        return 0.5 * self.amplitude * self.spacing * self.chip_length

    @property
    def support(self) -> float:
        """Path delay beyond which the reflection no longer biases tracking, metres."""
        return (1.0 + 0.5 * self.spacing) * self.chip_length


def multipath_bias_bound(delta, env: MultipathEnvelope = MultipathEnvelope()):
    """Worst-case pseudorange bias (m) for a reflection delayed by ``delta`` metres.

    In-phase reflection with an ideal triangular code correlation: the error
    grows as ``a/(1+a) * delay`` until it saturates at ``a*d/2`` chips, holds,
    and then falls back to zero at a delay of ``1 + d/2`` chips.
    """
    a, d = env.amplitude, env.spacing
    tau = np.abs(np.asarray(delta, dtype=float)) / env.chip_length
    rise = a * tau / (1.0 + a)
    plateau = np.full_like(tau, 0.5 * a * d)
    fall = a * (1.0 + 0.5 * d - tau) / (2.0 - a)
    err = np.minimum(np.minimum(rise, plateau), np.maximum(fall, 0.0))
    out = err * env.chip_length
    return float(out) if out.ndim == 0 else out
