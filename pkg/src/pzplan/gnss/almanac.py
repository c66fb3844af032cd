"""YUMA almanac parsing and Keplerian satellite propagation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "AlmanacError",
    "AlmanacRecord",
    "Constellation",
    "GM_EARTH",
    "OMEGA_EARTH",
    "format_yuma",
    "load_almanac",
    "orbital_plane_position",
    "parse_yuma",
    "sat_position",
]

GM_EARTH = 3.986005e14  # m^3/s^2, WGS-84 value used by GPS
OMEGA_EARTH = 7.2921151467e-5  # rad/s
HALF_WEEK = 302400.0


class AlmanacError(ValueError):
    pass


@dataclass(frozen=True)
class AlmanacRecord:
    prn: int
    eccentricity: float
    toa: float
    inclination: float
    raan_rate: float
    sqrt_a: float
    raan0: float
    arg_perigee: float
    mean_anomaly: float
    week: int
    health: int = 0
    af0: float = 0.0
    af1: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eccentricity < 1.0:
            raise AlmanacError(f"PRN {self.prn}: eccentricity {self.eccentricity} outside [0, 1)")
        if self.sqrt_a <= 0:
            raise AlmanacError(f"PRN {self.prn}: SQRT(A) must be positive")

    @property
    def semi_major_axis(self) -> float:
        return self.sqrt_a**2

    @property
    def mean_motion(self) -> float:
        return math.sqrt(GM_EARTH / self.semi_major_axis**3)


# (YUMA label, record field, converter, mandatory)
_LABELS = [
    ("ID", "prn", int, True),
    ("Health", "health", int, False),
    ("Eccentricity", "eccentricity", float, True),
    ("Time of Applicability(s)", "toa", float, True),
    ("Orbital Inclination(rad)", "inclination", float, True),
    ("Rate of Right Ascen(r/s)", "raan_rate", float, True),
    ("SQRT(A)  (m 1/2)", "sqrt_a", float, True),
    ("Right Ascen at Week(rad)", "raan0", float, True),
    ("Argument of Perigee(rad)", "arg_perigee", float, True),
    ("Mean Anom(rad)", "mean_anomaly", float, True),
    ("Af0(s)", "af0", float, False),
    ("Af1(s/s)", "af1", float, False),
    ("week", "week", int, True),
]


def _key(label: str) -> str:
    return re.sub(r"\s+", "", label).lower()


_BY_KEY = {_key(lbl): (name, conv, req) for lbl, name, conv, req in _LABELS}


def _parse_block(lines: list[tuple[int, str]]) -> AlmanacRecord:
    values: dict[str, object] = {}
    for lineno, line in lines:
        label, _, raw = line.partition(":")
        spec = _BY_KEY.get(_key(label))
        if spec is None:
            continue
        name, conv, _ = spec
        try:
            values[name] = conv(float(raw)) if conv is int else conv(raw)
        except ValueError:
            raise AlmanacError(f"line {lineno}: cannot parse {label.strip()!r} value {raw.strip()!r}") from None
    prn = values.get("prn", "?")
    for lbl, name, _, required in _LABELS:
        if required and name not in values:
            raise AlmanacError(f"PRN {prn}: missing field {lbl!r}")
    return AlmanacRecord(**values)


def parse_yuma(text: str) -> list[AlmanacRecord]:
    """Parse YUMA almanac text into one record per satellite block.

    Blocks are delimited by blank lines or ``****`` header lines; labels not
    in the standard YUMA set are ignored.
    """
    records = []
    block: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("*"):
            if block:
                records.append(_parse_block(block))
                block = []
            continue
        block.append((lineno, stripped))
    if block:
        records.append(_parse_block(block))
    return records


def load_almanac(path) -> list[AlmanacRecord]:
    return parse_yuma(Path(path).read_text())


def _fmt(x: float) -> str:
    return f"{x: .10E}"


def format_yuma(records) -> str:
    out = []
    for rec in records:
        out.append(f"******** Week {rec.week} almanac for PRN-{rec.prn:02d} ********")
        for lbl, name, conv, _ in _LABELS:
            val = getattr(rec, name)
            if name == "prn":
                txt = f"{val:02d}"
            elif name == "health":
                txt = f"{val:03d}"
            elif conv is int:
                txt = f"{val}"
            else:
                txt = _fmt(val)
            out.append(f"{lbl + ':':<28}{txt}")
        out.append("")
    return "\n".join(out)


def _kepler(mean_anomaly: float, e: float) -> float:
    ecc = mean_anomaly if e < 0.8 else math.pi
    for _ in range(30):
        step = (ecc - e * math.sin(ecc) - mean_anomaly) / (1.0 - e * math.cos(ecc))
        ecc -= step
        if abs(step) < 1e-12:
            return ecc
    raise AlmanacError(f"Kepler iteration did not converge (M={mean_anomaly}, e={e})")


def _time_from_toa(rec: AlmanacRecord, t: float) -> float:
    tk = t - rec.toa
    if tk > HALF_WEEK:
        tk -= 2 * HALF_WEEK
    elif tk < -HALF_WEEK:
        tk += 2 * HALF_WEEK
    return tk


def orbital_plane_position(rec: AlmanacRecord, t: float) -> np.ndarray:
    """In-plane coordinates ``(x', y')`` measured from the ascending node."""
    tk = _time_from_toa(rec, t)
    m = rec.mean_anomaly + rec.mean_motion * tk
    ecc = _kepler(math.remainder(m, 2 * math.pi), rec.eccentricity)
    e = rec.eccentricity
    nu = math.atan2(math.sqrt(1 - e * e) * math.sin(ecc), math.cos(ecc) - e)
    phi = nu + rec.arg_perigee
    r = rec.semi_major_axis * (1 - e * math.cos(ecc))
    return np.array([r * math.cos(phi), r * math.sin(phi)])


def sat_position(rec: AlmanacRecord, t: float) -> np.ndarray:
    """Earth-fixed satellite position (m) at ``t`` seconds of the week."""
    tk = _time_from_toa(rec, t)
    xp, yp = orbital_plane_position(rec, t)
    omega = rec.raan0 + (rec.raan_rate - OMEGA_EARTH) * tk - OMEGA_EARTH * rec.toa
    ci, si = math.cos(rec.inclination), math.sin(rec.inclination)
    co, so = math.cos(omega), math.sin(omega)
    return np.array([xp * co - yp * ci * so, xp * so + yp * ci * co, yp * si])


class Constellation:
    """Set of almanac records with positions cached per time quantum."""

    def __init__(self, records, quantum: float = 0.2):
        self.records = tuple(records)
        self.quantum = quantum
        self._positions = lru_cache(maxsize=4096)(self._compute)

    def _compute(self, tick: int) -> dict[int, np.ndarray]:
        t = tick * self.quantum
        return {rec.prn: sat_position(rec, t) for rec in self.records if rec.health == 0}

    def positions(self, t: float) -> dict[int, np.ndarray]:
        return self._positions(int(round(t / self.quantum)))

    @property
    def prns(self) -> list[int]:
        return [r.prn for r in self.records]


def record_fields() -> list[str]:
    return [f.name for f in fields(AlmanacRecord)]
