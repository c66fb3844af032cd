"""Reachable sets of the closed-loop state and estimation error.

The state and the estimation error at step ``k`` are written as sums of
matrix coefficients times *independent* quantities: the initial
deviations, the motion noise ``w_n``, the sensing noise ``nu_n`` and four
families of linearization remainders.  Because the summands are
independent, the sets can be assembled with plain Minkowski sums without
losing the correlation between state and estimation error.

Channel numbering used throughout:

====  ==========================================  =============
ch    quantity                                    keys at step k
====  ==========================================  =============
3     motion noise ``w_n``                        1 .. k
4     sensing noise ``nu_n``                      1 .. k
5     dynamics remainder about the true state     0 .. k-1
6     dynamics remainder about the estimate       0 .. k-1
7     measurement remainder about the true state  0 .. k-1
8     measurement remainder about the prediction  0 .. k-1
====  ==========================================  =============
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .estimator import ScheduleEntry
from .models import (
    remainder_bound_dynamics,
    remainder_bound_measurement,
    remainder_to_gaussian,
    wrap_angle,
)
from .zonotope import (
    THREE_SIGMA,
    ProbabilisticZonotope,
    Zonotope,
    confidence_zonotope,
    linear_map,
    minkowski_sum,
    reduce_order_pz,
)

__all__ = [
    "CHANNELS",
    "CoefficientTable",
    "ReachConfig",
    "ReachInputs",
    "ReachResult",
    "ReachState",
    "assemble_estimation_error_set",
    "assemble_state_set",
    "init_coefficients",
    "legacy_recursive_sets",
    "predict_uncertainty",
    "propagate_coefficients",
    "start_reach",
    "step_reach",
    "truncate",
]

CHANNELS = (3, 4, 5, 6, 7, 8)
REMAINDER_CHANNELS = (5, 6, 7, 8)


@dataclass(frozen=True, eq=False)
class _Block:
    """All coefficients of one channel, stored side by side column-wise."""

    keys: tuple[int, ...]
    widths: tuple[int, ...]
    phi: np.ndarray
    phi_tilde: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.widths, dtype=int)])

    def slice(self, key: int) -> slice:
        i = self.keys.index(key)
        off = self.offsets
        return slice(int(off[i]), int(off[i + 1]))

    def entry_norms(self) -> tuple[np.ndarray, np.ndarray]:
        """Frobenius norms of every entry of ``phi`` and ``phi_tilde``."""
        if not self.keys:
            return np.zeros(0), np.zeros(0)
        starts = self.offsets[:-1]
        nonempty = np.asarray(self.widths) > 0
        out = []
        for mat in (self.phi, self.phi_tilde):
            sq = np.zeros(len(self.keys))
            if mat.shape[1]:
                col = np.square(mat).sum(axis=0)
                sq[nonempty] = np.add.reduceat(col, starts[nonempty])
            out.append(np.sqrt(sq))
        return out[0], out[1]


def _empty_block(n: int) -> _Block:
    return _Block((), (), np.zeros((n, 0)), np.zeros((n, 0)))


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """Coefficients of the independent-quantity expansion at step ``k``."""

    k: int
    phi1: np.ndarray
    phi2: np.ndarray
    phi_tilde2: np.ndarray
    blocks: Mapping[int, _Block]

    @property
    def dim(self) -> int:
        return self.phi1.shape[0]

    def keys(self, channel: int) -> tuple[int, ...]:
        return self.blocks[channel].keys

    def phi(self, channel: int, key: int) -> np.ndarray:
        b = self.blocks[channel]
        return b.phi[:, b.slice(key)]

    def phi_tilde(self, channel: int, key: int) -> np.ndarray:
        b = self.blocks[channel]
        return b.phi_tilde[:, b.slice(key)]

    def kept_counts(self) -> dict[int, int]:
        return {ch: len(b.keys) for ch, b in self.blocks.items()}

    def equals(self, other: "CoefficientTable") -> bool:
        """Bitwise equality of every coefficient."""
        same = self.k == other.k and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("phi1", "phi2", "phi_tilde2")
        )
        for ch in CHANNELS:
            a, b = self.blocks[ch], other.blocks[ch]
            same = same and a.keys == b.keys and a.widths == b.widths
            same = same and np.array_equal(a.phi, b.phi) and np.array_equal(a.phi_tilde, b.phi_tilde)
        return bool(same)


def init_coefficients(dimension: int) -> CoefficientTable:
    """Table at ``k = 0``: only the initial-deviation coefficients are nonzero."""
    eye = np.eye(dimension)
    return CoefficientTable(
        k=0,
        phi1=eye,
        phi2=np.zeros((dimension, dimension)),
        phi_tilde2=eye.copy(),
        blocks={ch: _empty_block(dimension) for ch in CHANNELS},
    )


def propagate_coefficients(prev: CoefficientTable, entry: ScheduleEntry) -> CoefficientTable:
    """Advance the table from ``k-1`` to ``k``.

    ``entry`` supplies ``A_{k-1}``, ``B_{k-1}``, ``K_{k-1}`` together with the
    step-``k`` filter matrices ``L_k`` and ``C_k``.
    """
    n = prev.dim
    a, b, kf, gain, c = entry.a, entry.b, entry.feedback_k, entry.gain_l, entry.c
    if a.shape != (n, n):
        raise ValueError(f"schedule entry has dimension {a.shape[0]}, table has {n}")
    bk = b @ kf
    closed = a - bk
    innov = np.eye(n) - gain @ c
    est = innov @ a
    k = prev.k + 1
    m = c.shape[0]
    eye = np.eye(n)
    zero_n = np.zeros((n, n))
    zero_m = np.zeros((n, m))
    seeds = {
        3: (k, eye, -innov),
        4: (k, zero_m, gain),
        5: (k - 1, eye, -innov),
        6: (k - 1, zero_n, innov),
        7: (k - 1, zero_m, gain),
        8: (k - 1, zero_m, -gain),
    }
    blocks = {}
    for ch in CHANNELS:
        old = prev.blocks[ch]
        key, seed_phi, seed_tilde = seeds[ch]
        blocks[ch] = _Block(
            old.keys + (key,),
            old.widths + (seed_phi.shape[1],),
            np.concatenate([closed @ old.phi - bk @ old.phi_tilde, seed_phi], axis=1),
            np.concatenate([est @ old.phi_tilde, seed_tilde], axis=1),
        )
    return CoefficientTable(
        k=k,
        phi1=closed @ prev.phi1,
        phi2=closed @ prev.phi2 - bk @ prev.phi_tilde2,
        phi_tilde2=est @ prev.phi_tilde2,
        blocks=blocks,
    )


@dataclass(frozen=True)
class ReachConfig:
    """Truncation thresholds, generator budget and confidence of the derived sets.

    ``zeta`` is one threshold for every channel or a ``{channel: threshold}``
    mapping; the same threshold applies to the state and error coefficients.
    """

    zeta: float | Mapping[int, float] = 1e-4
    max_generators: int | None = 60
    confidence: float = THREE_SIGMA
    remainders: bool = True
    remainder_divisor: float = 3.0

    def threshold(self, channel: int) -> float:
        if isinstance(self.zeta, Mapping):
            return float(self.zeta.get(channel, 0.0))
        return float(self.zeta)

    def __post_init__(self):
        vals = self.zeta.values() if isinstance(self.zeta, Mapping) else [self.zeta]
        if any(v < 0 for v in vals):
            raise ValueError("truncation thresholds must be nonnegative")


def truncate(table: CoefficientTable, cfg: ReachConfig) -> CoefficientTable:
    """Drop coefficients whose Frobenius norm falls below the channel threshold.

    A ``phi`` entry and its ``phi_tilde`` partner are judged separately; a
    failing one is zeroed and the entry disappears once both fail.
    """
    blocks = {}
    for ch, blk in table.blocks.items():
        zeta = cfg.threshold(ch)
        if not blk.keys:
            blocks[ch] = blk
            continue
        norm_phi, norm_tilde = blk.entry_norms()
        keep_phi = norm_phi >= zeta
        keep_tilde = norm_tilde >= zeta
        if np.all(keep_phi) and np.all(keep_tilde):
            blocks[ch] = blk
            continue
        cols_phi = np.repeat(keep_phi, blk.widths)
        cols_tilde = np.repeat(keep_tilde, blk.widths)
        alive = keep_phi | keep_tilde
        cols = np.repeat(alive, blk.widths)
        phi = np.where(cols_phi, blk.phi, 0.0)[:, cols]
        phi_tilde = np.where(cols_tilde, blk.phi_tilde, 0.0)[:, cols]
        blocks[ch] = _Block(
            tuple(k for k, a in zip(blk.keys, alive) if a),
            tuple(w for w, a in zip(blk.widths, alive) if a),
            phi,
            phi_tilde,
        )
    return replace(table, blocks=blocks)


@dataclass(frozen=True, eq=False)
class _Parts:
    """An input set split into the pieces assembly needs."""

    center: np.ndarray
    diag: np.ndarray  # diagonal of the covariance when it is diagonal, else zeros
    full: np.ndarray | None  # covariance when it is not diagonal
    generators: np.ndarray

    @classmethod
    def of(cls, pz: ProbabilisticZonotope) -> "_Parts":
        cov = pz.covariance
        d = np.diag(cov).copy()
        if np.count_nonzero(cov - np.diag(d)):
            return cls(pz.center, np.zeros_like(d), cov, pz.generators)
        return cls(pz.center, d, None, pz.generators)


@dataclass(frozen=True, eq=False)
class _Stack:
    """Inputs of one channel laid out along the columns of its coefficient block."""

    keys: tuple[int, ...]
    widths: tuple[int, ...]
    centers: np.ndarray
    diag: np.ndarray
    gens: np.ndarray  # (total width, generators), block diagonal by key
    gen_owner: np.ndarray  # key owning each generator column
    full: tuple[tuple[int, np.ndarray], ...]

    @classmethod
    def build(cls, keys, parts) -> "_Stack":
        return cls((), (), np.zeros(0), np.zeros(0), np.zeros((0, 0)), np.zeros(0, dtype=int), ()).extend(keys, parts)

    def extend(self, keys, parts) -> "_Stack":
        if not keys:
            return self
        widths = tuple(p.center.size for p in parts)
        width = sum(self.widths) + sum(widths)
        extra = [(k, p) for k, p in zip(keys, parts) if p.generators.shape[1]]
        ng = sum(p.generators.shape[1] for _, p in extra)
        gens = np.zeros((width, self.gens.shape[1] + ng))
        gens[: self.gens.shape[0], : self.gens.shape[1]] = self.gens
        owner = list(self.gen_owner)
        row = sum(self.widths)
        col = self.gens.shape[1]
        for k, w, p in zip(keys, widths, parts):
            g = p.generators
            if g.shape[1]:
                gens[row : row + w, col : col + g.shape[1]] = g
                owner.extend([k] * g.shape[1])
                col += g.shape[1]
            row += w
        return _Stack(
            self.keys + tuple(keys),
            self.widths + widths,
            np.concatenate([self.centers] + [p.center for p in parts]),
            np.concatenate([self.diag] + [p.diag for p in parts]),
            gens,
            np.asarray(owner, dtype=int),
            self.full + tuple((k, p.full) for k, p in zip(keys, parts) if p.full is not None),
        )

    def restrict(self, alive: np.ndarray) -> "_Stack":
        keys = tuple(k for k, a in zip(self.keys, alive) if a)
        cols = np.repeat(alive, self.widths)
        live = set(keys)
        gcols = np.fromiter((k in live for k in self.gen_owner), dtype=bool, count=self.gen_owner.size)
        return _Stack(
            keys,
            tuple(w for w, a in zip(self.widths, alive) if a),
            self.centers[cols],
            self.diag[cols],
            self.gens[np.ix_(cols, gcols)],
            self.gen_owner[gcols],
            tuple(f for f in self.full if f[0] in live),
        )


@dataclass(eq=False)
class ReachInputs:
    """Initial sets and the per-channel input sets keyed by ``(channel, n)``.

    Channels listed in ``absent`` contribute nothing (e.g. remainders in a
    purely linear analysis).
    """

    x0: ProbabilisticZonotope
    x0_nominal: np.ndarray
    xt0: ProbabilisticZonotope
    channel_sets: dict[tuple[int, int], ProbabilisticZonotope] = field(default_factory=dict)
    absent: frozenset = frozenset()
    _stacks: dict = field(default_factory=dict, repr=False)

    def add(self, channel: int, key: int, pz: ProbabilisticZonotope) -> None:
        self.channel_sets[(channel, key)] = pz
        st = self._stacks.get(channel)
        if st is not None and key in st.keys:
            del self._stacks[channel]

    def get(self, channel: int, key: int) -> ProbabilisticZonotope | None:
        if channel in self.absent:
            return None
        try:
            return self.channel_sets[(channel, key)]
        except KeyError:
            raise KeyError(f"no input set for channel {channel}, n={key}") from None

    def stack(self, channel: int, keys: tuple[int, ...]) -> _Stack:
        """Stacked inputs for ``keys``, reusing the previous layout where possible."""
        st = self._stacks.get(channel)
        if st is not None and st.keys == keys:
            return st
        if st is not None:
            wanted = set(keys)
            alive = np.fromiter((k in wanted for k in st.keys), dtype=bool, count=len(st.keys))
            prefix = tuple(k for k, a in zip(st.keys, alive) if a)
            if keys[: len(prefix)] == prefix:
                base = st if alive.all() else st.restrict(alive)
                fresh = keys[len(prefix) :]
                st = base.extend(fresh, [_Parts.of(self.get(channel, k)) for k in fresh])
                self._stacks[channel] = st
                return st
        st = _Stack.build(keys, [_Parts.of(self.get(channel, k)) for k in keys])
        self._stacks[channel] = st
        return st

    def copy(self) -> "ReachInputs":
        return ReachInputs(self.x0, self.x0_nominal, self.xt0, dict(self.channel_sets), self.absent, dict(self._stacks))

    def prune(self, table: CoefficientTable) -> None:
        live = {(ch, k) for ch in CHANNELS for k in table.keys(ch)}
        for key in [k for k in self.channel_sets if k not in live]:
            del self.channel_sets[key]


def _block_contribution(mat: np.ndarray, blk: _Block, ch: int, inputs: ReachInputs):
    n = mat.shape[0]
    if ch in inputs.absent or not blk.keys:
        return np.zeros(n), [], np.zeros((n, n))
    st = inputs.stack(ch, blk.keys)
    if st.widths != blk.widths:
        for key, w, v in zip(blk.keys, blk.widths, st.widths):
            if w != v:
                raise ValueError(f"input for channel {ch}, n={key} has dimension {v}, expected {w}")
    cov = (mat * st.diag) @ mat.T
    for key, full in st.full:
        sub = mat[:, blk.slice(key)]
        cov += sub @ full @ sub.T
    gens = [mat @ st.gens] if st.gens.shape[1] else []
    return mat @ st.centers, gens, cov


def _assemble(table: CoefficientTable, inputs: ReachInputs, w_state: float, w_error: float) -> ProbabilisticZonotope:
    """Set of ``w_state * (x - x_nominal) + w_error * x_tilde`` at step ``table.k``.

    Both deviations are linear in the same independent inputs, so any such
    combination is assembled exactly from the summed coefficients.
    """
    n = table.dim
    x0_dev = inputs.x0.translate(-np.asarray(inputs.x0_nominal, dtype=float))
    acc = linear_map(w_state * table.phi2 + w_error * table.phi_tilde2, inputs.xt0)
    if w_state:
        acc = minkowski_sum(linear_map(w_state * table.phi1, x0_dev), acc)
    center = acc.center.copy()
    gens = [acc.generators]
    cov = acc.covariance.copy()
    for ch in CHANNELS:
        blk = table.blocks[ch]
        if not w_error:
            mat = w_state * blk.phi
        elif not w_state:
            mat = w_error * blk.phi_tilde
        else:
            mat = w_state * blk.phi + w_error * blk.phi_tilde
        c, g, s = _block_contribution(mat, blk, ch, inputs)
        center += c
        gens.extend(g)
        cov += s
    return ProbabilisticZonotope._derived(center, np.concatenate(gens, axis=1) if gens else np.zeros((n, 0)), 0.5 * (cov + cov.T))


def assemble_state_set(
    table: CoefficientTable, x_nominal, inputs: ReachInputs, max_generators: int | None = None
) -> ProbabilisticZonotope:
    """Predicted state uncertainty at step ``table.k`` centred on the nominal state."""
    dev = _assemble(table, inputs, 1.0, 0.0)
    return reduce_order_pz(dev.translate(np.asarray(x_nominal, dtype=float)), max_generators)


def assemble_estimation_error_set(
    table: CoefficientTable, inputs: ReachInputs, max_generators: int | None = None
) -> ProbabilisticZonotope:
    return reduce_order_pz(_assemble(table, inputs, 0.0, 1.0), max_generators)


def _maybe(inputs: ReachInputs, ch: int, key: int) -> ProbabilisticZonotope | None:
    if ch in inputs.absent or (ch, key) not in inputs.channel_sets:
        return None
    return inputs.channel_sets[(ch, key)]


def _add(acc: ProbabilisticZonotope, t, pz: ProbabilisticZonotope | None) -> ProbabilisticZonotope:
    return acc if pz is None else minkowski_sum(acc, linear_map(t, pz))


def legacy_recursive_sets(
    schedule: Sequence[ScheduleEntry], inputs: ReachInputs, horizon: int, nominal_states=None
) -> list[tuple[ProbabilisticZonotope, ProbabilisticZonotope]]:
    """Step-by-step set recursion that treats the state and error sets as independent.

    Kept as a baseline: because both sets share the earlier noise terms, the
    Minkowski sum of the state update misses their correlation.  Returns
    ``(state_set, error_set)`` for ``k = 0 .. horizon``.  Nominal states
    default to those stored in the schedule (zero when absent).
    """
    if nominal_states is None:
        x0 = np.asarray(inputs.x0_nominal, dtype=float)
        nominal_states = [x0] + [x0 * 0 if e.nominal_state is None else e.nominal_state for e in schedule[:horizon]]
    xs = np.asarray(nominal_states, dtype=float)
    state, err = inputs.x0, inputs.xt0
    out = [(state, err)]
    for k in range(1, horizon + 1):
        e = schedule[k - 1]
        n = e.a.shape[0]
        bk = e.b @ e.feedback_k
        innov = np.eye(n) - e.gain_l @ e.c
        dev = state.translate(-xs[k - 1])
        new_state = minkowski_sum(linear_map(e.a - bk, dev), linear_map(-bk, err))
        new_state = _add(new_state, np.eye(n), _maybe(inputs, 5, k - 1))
        new_state = _add(new_state, np.eye(n), _maybe(inputs, 3, k)).translate(xs[k])
        new_err = linear_map(innov @ e.a, err)
        new_err = _add(new_err, innov, _maybe(inputs, 6, k - 1))
        new_err = _add(new_err, -innov, _maybe(inputs, 5, k - 1))
        new_err = _add(new_err, e.gain_l, _maybe(inputs, 7, k - 1))
        new_err = _add(new_err, -e.gain_l, _maybe(inputs, 8, k - 1))
        new_err = _add(new_err, -innov, _maybe(inputs, 3, k))
        new_err = _add(new_err, e.gain_l, _maybe(inputs, 4, k))
        state, err = new_state, new_err
        out.append((state, err))
    return out


# --------------------------------------------------------------------------
# Driver used by the planner: one step of the recursion along a schedule.


@dataclass(frozen=True, eq=False)
class ReachState:
    """Snapshot after step ``k``: coefficients, inputs seen so far, current sets."""

    table: CoefficientTable
    inputs: ReachInputs
    state_set: ProbabilisticZonotope
    error_set: ProbabilisticZonotope
    nominal: np.ndarray
    filter_cov: np.ndarray
    estimate_dev: ProbabilisticZonotope | None = None

    @property
    def k(self) -> int:
        return self.table.k


@dataclass(frozen=True, eq=False)
class ReachResult:
    state_sets: list[ProbabilisticZonotope]
    error_sets: list[ProbabilisticZonotope]
    kept_channel_counts: list[dict[int, int]]


def start_reach(x0: ProbabilisticZonotope, x0_nominal, xt0: ProbabilisticZonotope, p0=None, absent=frozenset()) -> ReachState:
    n = x0.dim
    inputs = ReachInputs(x0, np.asarray(x0_nominal, dtype=float), xt0, {}, frozenset(absent))
    table = init_coefficients(n)
    return ReachState(
        table=table,
        inputs=inputs,
        state_set=x0,
        error_set=xt0,
        nominal=np.asarray(x0_nominal, dtype=float),
        filter_cov=xt0.covariance if p0 is None else np.asarray(p0, dtype=float),
        estimate_dev=_assemble(table, inputs, 1.0, 1.0),
    )


def _offset_zonotope(p: ProbabilisticZonotope, offset, confidence: float) -> Zonotope:
    z = confidence_zonotope(p, confidence)
    off = z.center - offset
    if off.size >= 3:
        off[2] = wrap_angle(off[2])
    return Zonotope(off, z.generators)


def _hull_radius(z: Zonotope) -> np.ndarray:
    return np.abs(z.center) + z.radius()


def _deviation_radii(state: ReachState, confidence: float, feedback=None):
    """Interval-hull radii of ``x - x_nominal``, ``x_hat - x_nominal`` and the input deviation.

    The estimate deviation is assembled exactly from the summed state and
    error coefficients, so the correlation between the two is kept.  The
    input deviation ``-K (x_hat - x_nominal)`` is bounded through the image
    of that set, which is tighter than scaling its hull by ``|K|``.
    """
    zs = _offset_zonotope(state.state_set, state.nominal, confidence)
    if state.estimate_dev is None:
        ze = _offset_zonotope(state.error_set, 0.0, confidence)
        ze = Zonotope(zs.center + ze.center, np.concatenate([zs.generators, ze.generators], axis=1))
    else:
        ze = _offset_zonotope(state.estimate_dev, 0.0, confidence)
    gu = None
    if feedback is not None:
        k = np.asarray(feedback, dtype=float)
        gu = np.abs(k @ ze.center) + np.abs(k @ ze.generators).sum(axis=1)
    return _hull_radius(zs), _hull_radius(ze), gu


def _remainder_inputs(state: ReachState, entry: ScheduleEntry, dt: float, cfg: ReachConfig, altitude: float):
    gs, ge, gu = _deviation_radii(state, cfg.confidence, entry.feedback_k)
    # one bound serves the true and the filter-side expansions
    gx = np.maximum(gs, ge)
    bound_f = remainder_bound_dynamics(gx, gu, entry.nominal_prev, entry.input_prev, dt)
    m = entry.meas_dim
    if entry.sat_positions is not None and len(entry.sat_positions):
        bound_h = remainder_bound_measurement(gx[:2], entry.nominal_state, entry.sat_positions, altitude)
    else:
        bound_h = np.zeros(m)
    gf = remainder_to_gaussian(bound_f, cfg.remainder_divisor).covariance
    gh = remainder_to_gaussian(bound_h, cfg.remainder_divisor).covariance
    return ProbabilisticZonotope.gaussian(np.zeros(gf.shape[0]), gf), ProbabilisticZonotope.gaussian(np.zeros(m), gh)


def sensing_set(entry: ScheduleEntry) -> ProbabilisticZonotope:
    """Sensing noise set: true Gaussian noise plus a box of multipath biases."""
    bias = np.asarray(entry.bias_bound, dtype=float)
    nz = np.flatnonzero(bias)
    gens = np.zeros((bias.size, nz.size))
    gens[nz, np.arange(nz.size)] = bias[nz]
    return ProbabilisticZonotope(np.zeros(bias.size), gens, np.diag(entry.noise_var))


def step_reach(
    state: ReachState,
    entry: ScheduleEntry,
    q,
    dt: float,
    cfg: ReachConfig,
    altitude: float = 0.0,
) -> ReachState:
    """Advance the reachable sets by one step of the schedule."""
    k = state.k + 1
    inputs = state.inputs.copy()
    n = state.table.dim
    inputs.add(3, k, ProbabilisticZonotope.gaussian(np.zeros(n), q))
    if entry.noise_var is not None:
        inputs.add(4, k, sensing_set(entry))
    if cfg.remainders and entry.nominal_prev is not None:
        lf, lh = _remainder_inputs(state, entry, dt, cfg, altitude)
        inputs.add(5, k - 1, lf)
        inputs.add(6, k - 1, lf)
        inputs.add(7, k - 1, lh)
        inputs.add(8, k - 1, lh)
    table = truncate(propagate_coefficients(state.table, entry), cfg)
    inputs.prune(table)
    nominal = entry.nominal_state if entry.nominal_state is not None else state.nominal
    return ReachState(
        table=table,
        inputs=inputs,
        state_set=assemble_state_set(table, nominal, inputs, cfg.max_generators),
        error_set=assemble_estimation_error_set(table, inputs, cfg.max_generators),
        nominal=np.asarray(nominal, dtype=float),
        filter_cov=entry.p_post if entry.p_post is not None else state.filter_cov,
        estimate_dev=_assemble(table, inputs, 1.0, 1.0) if cfg.remainders else None,
    )


def predict_uncertainty(
    schedule: Sequence[ScheduleEntry],
    start: ReachState,
    q,
    dt: float,
    cfg: ReachConfig = ReachConfig(),
    altitude: float = 0.0,
) -> ReachResult:
    """Reachable sets along a whole schedule, starting from ``start``."""
    state = start
    states, errors, counts = [start.state_set], [start.error_set], [start.table.kept_counts()]
    for entry in schedule:
        state = step_reach(state, entry, q, dt, cfg, altitude)
        states.append(state.state_set)
        errors.append(state.error_set)
        counts.append(state.table.kept_counts())
    return ReachResult(states, errors, counts)
