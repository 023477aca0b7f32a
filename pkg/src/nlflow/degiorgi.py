"""Barrier functions, truncated energies, and regularity diagnostics.

Everything in this module consumes sampled trajectories (see `flow`) and
produces deterministic reports.  The detectors (`verify_lemma1`, ...,
`verify_lemma2`) share a three-way verdict convention:

* ``"pass"``                -- hypothesis held and the conclusion held;
* ``"fail"``                -- hypothesis held but the conclusion broke;
* ``"hypothesis-violated"`` -- hypothesis (or a precondition) did not hold,
                               so the run is vacuous for the statement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import InsufficientCoverageError, InvalidParameterError
from .flow import Trajectory
from .grid import Grid

__all__ = [
    "BARRIER_KINDS",
    "BarrierFamily",
    "make_barrier",
    "eval_barrier",
    "barrier_on_grid",
    "TruncatedEnergySequence",
    "truncated_energies",
    "RecurrenceReport",
    "check_recurrence",
    "ChebyshevReport",
    "chebyshev_chain",
    "space_time_measure",
    "LevelSetMeasures",
    "level_set_measures",
    "LemmaReport",
    "verify_lemma1",
    "verify_corollary1",
    "verify_corollary2",
    "verify_lemma2",
]


# ---------------------------------------------------------------------------
# barriers

BARRIER_KINDS = (
    "psi",              # (|x|^{s/2} - 1)_+
    "psi_L",            # L + psi(x)
    "psi1",             # (|x|^{s/4} - 1)_+
    "psi_lambda",       # ((|x| - lam^{-4/s})^{s/4} - 1)_+ past its support radius
    "psi_eps_lambda",   # same support, exponent eps instead of s/4
    "F",                # sup(-1, inf(0, |x|^2 - 9))
    "phi0",             # 1 + psi_lambda + F
    "phi1",             # 1 + psi_lambda + lam   * F
    "phi2",             # 1 + psi_lambda + lam^2 * F
)

_LAMBDA_KINDS = ("psi_lambda", "psi_eps_lambda", "phi0", "phi1", "phi2")


@dataclass(frozen=True)
class BarrierFamily:
    """A radial barrier profile; `eval_barrier` consumes |x|."""

    kind: str
    order: float = 1.0       # s
    shift: float = 0.0       # the L in psi_L
    lam: float = 0.25        # lambda, used by the psi_lambda family
    eps: float = 0.05        # exponent of psi_eps_lambda

    def __post_init__(self):
        if self.kind not in BARRIER_KINDS:
            raise InvalidParameterError(
                f"unknown barrier kind {self.kind!r}; expected one of "
                f"{BARRIER_KINDS}")
        if not (0.0 < self.order < 2.0):
            raise InvalidParameterError(
                f"barrier order must lie in (0, 2), got {self.order}")
        if self.shift < 0.0:
            raise InvalidParameterError(
                f"barrier shift must be >= 0, got {self.shift}")
        if self.kind in _LAMBDA_KINDS and not (0.0 < self.lam < 1.0 / 3.0):
            raise InvalidParameterError(
                f"lambda must lie in (0, 1/3), got {self.lam}")
        if self.kind == "psi_eps_lambda" and not (self.eps > 0.0):
            raise InvalidParameterError(
                f"eps must be positive, got {self.eps}")

    @property
    def support_radius(self) -> float:
        """Radius below which the lambda-family barriers vanish."""
        if self.kind in _LAMBDA_KINDS:
            return self.lam ** (-4.0 / self.order)
        if self.kind in ("psi", "psi_L", "psi1"):
            return 1.0
        return 0.0


def make_barrier(kind: str, order: float = 1.0, shift: float = 0.0,
                 lam: float = 0.25, eps: float = 0.05) -> BarrierFamily:
    return BarrierFamily(kind=kind, order=order, shift=shift,
                         lam=lam, eps=eps)


def _ramp(r: np.ndarray, offset: float, exponent: float) -> np.ndarray:
    # ((r - offset)^exponent - 1)_+ with the power only taken past the offset
    shifted = np.maximum(r - offset, 0.0)
    return np.maximum(shifted ** exponent - 1.0, 0.0)


def eval_barrier(b: BarrierFamily, x) -> np.ndarray:
    """Evaluate a barrier at radial coordinates |x| (scalar or array).

    All barriers are radial and even; callers on a grid pass periodic node
    distances (see `barrier_on_grid`).
    """
    r = np.abs(np.asarray(x, dtype=np.float64))
    s = b.order
    if b.kind == "psi":
        return _ramp(r, 0.0, 0.5 * s)
    if b.kind == "psi_L":
        return b.shift + _ramp(r, 0.0, 0.5 * s)
    if b.kind == "psi1":
        return _ramp(r, 0.0, 0.25 * s)
    if b.kind == "psi_lambda":
        return _ramp(r, b.support_radius, 0.25 * s)
    if b.kind == "psi_eps_lambda":
        return _ramp(r, b.support_radius, b.eps)
    if b.kind == "F":
        return np.maximum(-1.0, np.minimum(0.0, r * r - 9.0))
    base = BarrierFamily("psi_lambda", order=s, lam=b.lam)
    hump = np.maximum(-1.0, np.minimum(0.0, r * r - 9.0))
    scale = {"phi0": 1.0, "phi1": b.lam, "phi2": b.lam * b.lam}[b.kind]
    return 1.0 + eval_barrier(base, r) + scale * hump


def barrier_on_grid(b: BarrierFamily, grid: Grid, center=None) -> np.ndarray:
    """Barrier values at every node (flat), measured from `center`."""
    if center is None:
        dist = grid.origin_distance()
    else:
        dist = grid.distance_to(center)
    return eval_barrier(b, dist)


# ---------------------------------------------------------------------------
# truncated energies U_k

@dataclass(frozen=True)
class TruncatedEnergySequence:
    levels: np.ndarray          # k = 0..k_max
    window_starts: np.ndarray   # T_k = -1 - 2^-k
    cut_levels: np.ndarray      # L_k = (1 - 2^-k) / 2
    sup_part: np.ndarray        # sup_t int (w - psi_{L_k})_+^2 dx
    integral_part: np.ndarray   # int_t seminorm((w - psi_{L_k})_+)^2 dt
    values: np.ndarray          # U_k = sup_part + integral_part
    order: float
    cutoff: float
    n_samples: int

    @property
    def k_max(self) -> int:
        return int(self.levels[-1])


def _stack_seminorm_sq(grid: Grid, stack: np.ndarray, order: float,
                       cutoff: float) -> np.ndarray:
    """Squared Gagliardo seminorm of every field in a (..., nodes) stack."""
    shape = stack.shape[:-1]
    wg = stack.reshape(shape + grid.shape)
    node_axes = tuple(range(len(shape), len(shape) + grid.dimension))
    deltas, dists = grid.offsets_within(cutoff)
    weights = dists ** (-(grid.dimension + order))
    acc = np.zeros(shape, dtype=np.float64)
    for delta, wgt in zip(deltas, weights):
        rolled = np.roll(wg, tuple(-delta), axis=node_axes)
        diff = wg - rolled
        acc += wgt * np.sum(diff * diff, axis=node_axes)
    return acc * grid.spacing ** (2 * grid.dimension)


def truncated_energies(traj: Trajectory, k_max: int, order: float | None = None,
                       cutoff: float = 2.0) -> TruncatedEnergySequence:
    """Level-truncated energies U_k over the shrinking windows [T_k, 0].

    T_k = -1 - 2^-k and L_k = (1 - 2^-k)/2 are exact dyadics, the truncation
    barrier is psi_{L_k} centred at the origin, and

        U_k = sup_{t in [T_k, 0]} int (w - psi_{L_k})_+^2 dx
              + int_{T_k}^0 [ (w - psi_{L_k})_+ ]_{s/2}^2 dt .

    The sup and the time integral are both accumulated from t = 0 backwards
    so that U_{k+1} <= U_k holds exactly in floating point (each level-k+1
    term is a rounded-monotone image of the matching level-k term, and the
    level-k sequence only gains extra nonnegative terms).
    """
    if k_max < 1:
        raise InvalidParameterError(f"k_max must be >= 1, got {k_max}")
    s = float(traj.order if order is None else order)
    if not (0.0 < s < 2.0):
        raise InvalidParameterError(f"order must lie in (0, 2), got {s}")
    grid = traj.grid
    idx = traj.window(-2.0, 0.0)
    if idx.size < 2 or traj.times[idx[0]] > -2.0 + 1e-9 or \
            traj.times[idx[-1]] < -1e-9:
        raise InsufficientCoverageError(
            "trajectory samples must cover [-2, 0] for truncated energies")
    times = traj.times[idx]
    max_gap = float(np.max(np.diff(times)))
    cadence = 2.0 ** (-k_max) / 4.0
    if max_gap > cadence * (1.0 + 1e-9):
        raise InsufficientCoverageError(
            f"sample spacing {max_gap:.3e} exceeds {cadence:.3e}; the "
            f"[T_{k_max}, 0] window would be under-resolved")

    ks = np.arange(k_max + 1)
    t_starts = -1.0 - 0.5 ** ks
    cuts = 0.5 - 0.5 * 0.5 ** ks
    psi = barrier_on_grid(BarrierFamily("psi", order=s), grid)
    psi_l = cuts[:, None] + psi[None, :]           # (K, nodes)

    h_n = grid.spacing ** grid.dimension
    n_idx = idx.size
    n_k = ks.size
    l2_mass = np.empty((n_idx, n_k), dtype=np.float64)
    seminorm = np.empty((n_idx, n_k), dtype=np.float64)
    chunk = max(1, (1 << 22) // max(1, n_k * grid.n_nodes))
    for lo in range(0, n_idx, chunk):
        hi = min(lo + chunk, n_idx)
        block = traj.fields[idx[lo:hi]]            # (b, nodes)
        pos = np.maximum(block[:, None, :] - psi_l[None, :, :], 0.0)
        l2_mass[lo:hi] = np.sum(pos * pos, axis=-1) * h_n
        seminorm[lo:hi] = _stack_seminorm_sq(grid, pos, s, cutoff)

    # accumulate from t = 0 backwards: reversing makes each window a prefix
    rev_mass = l2_mass[::-1]
    rev_times = times[::-1]
    running_sup = np.maximum.accumulate(rev_mass, axis=0)
    gaps = -np.diff(rev_times)                     # positive, 0-side first
    pair_terms = gaps[:, None] * 0.5 * (seminorm[::-1][:-1]
                                        + seminorm[::-1][1:])
    running_int = np.cumsum(pair_terms, axis=0)

    sup_part = np.empty(n_k)
    int_part = np.empty(n_k)
    tol = 1e-9
    for j, t_k in enumerate(t_starts):
        n_in = int(np.sum(times >= t_k - tol))
        sup_part[j] = running_sup[n_in - 1, j]
        int_part[j] = running_int[n_in - 2, j] if n_in >= 2 else 0.0
    values = sup_part + int_part
    return TruncatedEnergySequence(
        levels=ks, window_starts=t_starts, cut_levels=cuts,
        sup_part=sup_part, integral_part=int_part, values=values,
        order=s, cutoff=cutoff, n_samples=n_idx)


@dataclass(frozen=True)
class RecurrenceReport:
    levels: np.ndarray         # k = 1..k_max
    ratios: np.ndarray         # c_k = (U_k / U_{k-1}^{1+s/N})^{1/k}
    constant: float            # max over defined c_k
    decayed: bool              # U_{k_max} < 1e-14
    degenerate: bool           # some U_{k-1} vanished, ratio undefined
    vacuous: bool              # every U_k is zero; recurrence holds trivially
    tail_value: float


def check_recurrence(seq: TruncatedEnergySequence,
                     dimension: int | None = None) -> RecurrenceReport:
    """Fit the smallest constant certifying U_k <= (C 2^k)^k U_{k-1}^{1+s/N}."""
    u = seq.values
    n_dim = 1 if dimension is None else int(dimension)
    expo = 1.0 + seq.order / n_dim
    ks = seq.levels[1:]
    ratios = np.full(ks.size, np.nan)
    degenerate = False
    for i, k in enumerate(ks):
        prev = u[k - 1]
        if prev <= 0.0:
            degenerate = True
            continue
        ratios[i] = (u[k] / prev ** expo) ** (1.0 / k)
    defined = ratios[np.isfinite(ratios)]
    constant = float(np.max(defined)) if defined.size else math.nan
    return RecurrenceReport(
        levels=ks, ratios=ratios, constant=constant,
        decayed=bool(u[-1] < 1e-14), degenerate=degenerate,
        vacuous=bool(np.all(u == 0.0)), tail_value=float(u[-1]))


# ---------------------------------------------------------------------------
# Chebyshev-type interpolation chain

@dataclass(frozen=True)
class ChebyshevReport:
    levels: np.ndarray           # k = 1..k_max
    linear_lhs: np.ndarray       # iint (w - psi_{L_k})_+
    indicator_lhs: np.ndarray    # iint 1_{w > psi_{L_k}}
    quadratic_lhs: np.ndarray    # iint (w - psi_{L_k})_+^2
    base_integral: np.ndarray    # iint (w - psi_{L_{k-1}})_+^{2(1+s/N)}
    exponents: tuple             # powers of 2^{k+1} in the three bounds
    slack: np.ndarray            # (k, 3) rhs - lhs, nonnegative when chain holds
    all_nonnegative: bool


def chebyshev_chain(traj: Trajectory, k_max: int,
                    order: float | None = None) -> ChebyshevReport:
    """Interpolation bounds linking mass, measure, and energy across levels.

    Over Q_{k-1} = [T_{k-1}, 0] x nodes, with p the matching exponent,

        iint (w - psi_{L_k})_+      <= (2^{k+1})^{1+2s/N} iint (w-psi_{L_{k-1}})_+^{2(1+s/N)}
        iint 1_{w > psi_{L_k}}      <= (2^{k+1})^{2(1+s/N)} iint ...
        iint (w - psi_{L_k})_+^2    <= (2^{k+1})^{2s/N}     iint ...

    which follow pointwise from (w - psi_{L_{k-1}})_+ >= 2^{-(k+1)} on the
    set where w exceeds psi_{L_k}.
    """
    if k_max < 1:
        raise InvalidParameterError(f"k_max must be >= 1, got {k_max}")
    s = float(traj.order if order is None else order)
    grid = traj.grid
    n_dim = grid.dimension
    idx = traj.window(-2.0, 0.0)
    if idx.size < 2:
        raise InsufficientCoverageError(
            "trajectory must sample [-2, 0] for the interpolation chain")
    times = traj.times[idx]
    fields = traj.fields[idx]
    psi = barrier_on_grid(BarrierFamily("psi", order=s), grid)
    h_n = grid.spacing ** n_dim

    ks = np.arange(1, k_max + 1)
    t_starts = -1.0 - 0.5 ** np.arange(k_max + 1)
    cuts = 0.5 - 0.5 * 0.5 ** np.arange(k_max + 1)
    p_lin = 1.0 + 2.0 * s / n_dim
    p_ind = 2.0 * (1.0 + s / n_dim)
    p_sq = 2.0 * s / n_dim
    high = 2.0 * (1.0 + s / n_dim)

    lin = np.empty(ks.size)
    ind = np.empty(ks.size)
    sq = np.empty(ks.size)
    base = np.empty(ks.size)
    for i, k in enumerate(ks):
        inside = times >= t_starts[k - 1] - 1e-9
        tw = times[inside]
        if tw.size < 2:
            raise InsufficientCoverageError(
                f"window [T_{k - 1}, 0] holds {tw.size} samples; need >= 2")
        w = fields[inside]
        pos_k = np.maximum(w - (cuts[k] + psi)[None, :], 0.0)
        pos_km1 = np.maximum(w - (cuts[k - 1] + psi)[None, :], 0.0)
        lin[i] = np.trapezoid(np.sum(pos_k, axis=1) * h_n, tw)
        ind[i] = np.trapezoid(np.sum(pos_k > 0.0, axis=1) * h_n, tw)
        sq[i] = np.trapezoid(np.sum(pos_k * pos_k, axis=1) * h_n, tw)
        base[i] = np.trapezoid(np.sum(pos_km1 ** high, axis=1) * h_n, tw)

    factors = 2.0 ** (ks + 1)
    slack = np.stack([
        factors ** p_lin * base - lin,
        factors ** p_ind * base - ind,
        factors ** p_sq * base - sq,
    ], axis=1)
    return ChebyshevReport(
        levels=ks, linear_lhs=lin, indicator_lhs=ind, quadratic_lhs=sq,
        base_integral=base, exponents=(p_lin, p_ind, p_sq), slack=slack,
        all_nonnegative=bool(np.all(slack >= 0.0)))


# ---------------------------------------------------------------------------
# space-time level-set measures

def space_time_measure(traj: Trajectory, masks: np.ndarray,
                       idx: np.ndarray) -> float:
    """Trapezoid-in-time integral of the node-count measure of `masks`.

    `masks` holds one boolean row per selected sample (idx into traj.times);
    each row's measure is count * h^N.
    """
    if idx.size < 2:
        raise InsufficientCoverageError(
            f"need >= 2 samples for a space-time measure, got {idx.size}")
    h_n = traj.grid.spacing ** traj.grid.dimension
    slice_measure = np.sum(masks, axis=1) * h_n
    return float(np.trapezoid(slice_measure, traj.times[idx]))


@dataclass(frozen=True)
class LevelSetMeasures:
    below_phi0: float        # |{w < phi0} ^ ((-3,-2) x B_1)|
    above_phi2: float        # |{w > phi2} ^ ((-2,0) x torus)|
    intermediate: float      # |{phi0 < w < phi2} ^ ((-3,0) x torus)|
    lam: float
    order: float


def level_set_measures(traj: Trajectory, lam: float,
                       order: float | None = None) -> LevelSetMeasures:
    """The three level-set measures entering the measure-gain dichotomy."""
    s = float(traj.order if order is None else order)
    grid = traj.grid
    phi0 = barrier_on_grid(BarrierFamily("phi0", order=s, lam=lam), grid)
    phi2 = barrier_on_grid(BarrierFamily("phi2", order=s, lam=lam), grid)
    ball1 = grid.ball(1.0)

    idx_early = traj.require_window(-3.0, -2.0)
    w = traj.fields[idx_early]
    below = space_time_measure(
        traj, (w < phi0[None, :]) & ball1[None, :], idx_early)

    idx_late = traj.require_window(-2.0, 0.0)
    w = traj.fields[idx_late]
    above = space_time_measure(traj, w > phi2[None, :], idx_late)

    idx_full = traj.require_window(-3.0, 0.0)
    w = traj.fields[idx_full]
    mid = space_time_measure(
        traj, (w > phi0[None, :]) & (w < phi2[None, :]), idx_full)
    return LevelSetMeasures(below_phi0=below, above_phi2=above,
                            intermediate=mid, lam=lam, order=s)


# ---------------------------------------------------------------------------
# lemma / corollary detectors

@dataclass(frozen=True)
class LemmaReport:
    name: str
    verdict: str                 # "pass" | "fail" | "hypothesis-violated"
    precondition_ok: bool
    hypothesis_ok: bool
    conclusion_ok: bool
    numbers: dict = dataclass_field(default_factory=dict)
    first_violation: dict | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _verdict(precondition_ok: bool, hypothesis_ok: bool,
             conclusion_ok: bool) -> str:
    """Conclusion-first grading shared by every detector.

    A run whose conclusion holds passes outright — the statements are
    implications, so a true consequent can never witness a violation.  A
    broken conclusion counts as "fail" only when the premises actually held;
    otherwise the run is outside the statement's scope.
    """
    if conclusion_ok:
        return "pass"
    if precondition_ok and hypothesis_ok:
        return "fail"
    return "hypothesis-violated"


def _first_exceedance(traj: Trajectory, idx: np.ndarray,
                      bound: np.ndarray) -> dict | None:
    """Earliest (time, node) where a sampled field exceeds `bound`."""
    for i in idx:
        over = traj.fields[i] > bound
        if np.any(over):
            node = int(np.argmax(over))
            return {
                "time": float(traj.times[i]),
                "node": node,
                "value": float(traj.fields[i][node]),
                "bound": float(bound[node]),
            }
    return None


def verify_lemma1(traj: Trajectory, eps0: float,
                  order: float | None = None) -> LemmaReport:
    """Small truncated energy on [-2,0] forces w <= 1/2 + psi on [-1,0].

    Hypothesis: int_{-2}^0 int (w - psi)_+^2 dx dt <= eps0.
    """
    if not (eps0 > 0.0):
        raise InvalidParameterError(f"eps0 must be positive, got {eps0}")
    s = float(traj.order if order is None else order)
    grid = traj.grid
    psi = barrier_on_grid(BarrierFamily("psi", order=s), grid)
    h_n = grid.spacing ** grid.dimension

    idx = traj.require_window(-2.0, 0.0)
    pos = np.maximum(traj.fields[idx] - psi[None, :], 0.0)
    truncated_mass = float(np.trapezoid(
        np.sum(pos * pos, axis=1) * h_n, traj.times[idx]))
    hypothesis_ok = truncated_mass <= eps0

    idx_late = traj.require_window(-1.0, 0.0)
    bound = 0.5 + psi
    violation = _first_exceedance(traj, idx_late, bound)
    conclusion_ok = violation is None

    # On a torus the barrier only grows out to distance L/2; record whether
    # psi(L/2) dominates the data, the validity condition for reading the
    # whole-space statement on periodic geometry.
    psi_at_half = float(eval_barrier(BarrierFamily("psi", order=s),
                                     0.5 * grid.side_length))
    sup_w = float(np.max(np.abs(traj.fields[idx])))
    return LemmaReport(
        name="lemma1", verdict=_verdict(True, hypothesis_ok, conclusion_ok),
        precondition_ok=True, hypothesis_ok=hypothesis_ok,
        conclusion_ok=conclusion_ok,
        numbers={"truncated_mass": truncated_mass, "eps0": eps0,
                 "order": s, "far_field_margin": psi_at_half - 2.0 * sup_w,
                 "far_field_ok": bool(psi_at_half >= 2.0 * sup_w)},
        first_violation=violation)


def verify_corollary1(traj: Trajectory, t0: float, eps0: float,
                      order: float | None = None) -> LemmaReport:
    """Sup bound from the initial L2 mass after a waiting time t0.

    For tau = t - t_start >= t0 the sampled sup norm is checked against
    ||w(0)||_2 / (2 sqrt(eps0) (t0/2)^{(N/s + 1)/2}).
    """
    if not (eps0 > 0.0):
        raise InvalidParameterError(f"eps0 must be positive, got {eps0}")
    span = float(traj.times[-1] - traj.times[0])
    if not (0.0 < t0 < 2.0) or t0 > span:
        raise InvalidParameterError(
            f"waiting time t0={t0} must lie in (0, 2) within the sampled "
            f"span {span}")
    s = float(traj.order if order is None else order)
    n_dim = traj.grid.dimension
    l2_initial = traj.field(0).l2_norm()
    exponent = 0.5 * (n_dim / s + 1.0)
    bound = l2_initial / (2.0 * math.sqrt(eps0) * (0.5 * t0) ** exponent)

    tau = traj.times - traj.times[0]
    idx = np.where(tau >= t0 - 1e-9 * max(1.0, span))[0]
    if idx.size == 0:
        raise InsufficientCoverageError(
            f"no samples at or beyond waiting time {t0}")
    sup_curve = np.max(np.abs(traj.fields[idx]), axis=1)
    measured = float(np.max(sup_curve))
    conclusion_ok = measured <= bound
    worst = int(np.argmax(sup_curve))

    # dimensionless decay profile r(t0) over a dyadic ladder of waiting times
    ladder, ratios = [], []
    if l2_initial > 0.0:
        for t_d in 0.5 ** np.arange(1, 7):
            if t_d > span:
                continue
            j = int(np.argmin(np.abs(tau - t_d)))
            sup_here = float(np.max(np.abs(traj.fields[j])))
            ladder.append(float(t_d))
            ratios.append(sup_here * t_d ** exponent / l2_initial)
    return LemmaReport(
        name="corollary1", verdict=_verdict(True, True, conclusion_ok),
        precondition_ok=True, hypothesis_ok=True, conclusion_ok=conclusion_ok,
        numbers={"bound": bound, "measured_sup": measured,
                 "l2_initial": l2_initial, "t0": t0, "eps0": eps0,
                 "worst_time": float(traj.times[idx[worst]]),
                 "ratio_t0": ladder, "ratio_r": ratios},
        first_violation=None if conclusion_ok else {
            "time": float(traj.times[idx[worst]]),
            "value": measured, "bound": bound})


def verify_corollary2(traj: Trajectory, delta: float,
                      order: float | None = None) -> LemmaReport:
    """Small positivity set plus a one-scale barrier forces w <= 1/2 inside.

    Precondition: w <= 1 + psi1 at every sample in [-2, 0].
    Hypothesis:   |{w > 0} ^ ([-2,0] x B_2)| <= delta.
    Conclusion:   w <= 1/2 on [-1,0] x B_1.
    """
    if not (delta > 0.0):
        raise InvalidParameterError(f"delta must be positive, got {delta}")
    s = float(traj.order if order is None else order)
    grid = traj.grid
    psi1 = barrier_on_grid(BarrierFamily("psi1", order=s), grid)

    idx = traj.require_window(-2.0, 0.0)
    envelope_breach = _first_exceedance(traj, idx, 1.0 + psi1)
    precondition_ok = envelope_breach is None

    ball2 = grid.ball(2.0)
    masks = (traj.fields[idx] > 0.0) & ball2[None, :]
    positivity = space_time_measure(traj, masks, idx)
    hypothesis_ok = positivity <= delta

    idx_late = traj.require_window(-1.0, 0.0)
    ball1 = grid.ball(1.0)
    half = np.where(ball1, 0.5, np.inf)
    violation = _first_exceedance(traj, idx_late, half)
    conclusion_ok = violation is None
    return LemmaReport(
        name="corollary2",
        verdict=_verdict(precondition_ok, hypothesis_ok, conclusion_ok),
        precondition_ok=precondition_ok, hypothesis_ok=hypothesis_ok,
        conclusion_ok=conclusion_ok,
        numbers={"positivity_measure": positivity, "delta": delta,
                 "order": s},
        first_violation=violation if violation is not None else envelope_breach)


def verify_lemma2(traj: Trajectory, mu: float, delta: float, gamma: float,
                  lam: float, order: float | None = None) -> LemmaReport:
    """Measure-gain dichotomy between the phi0 and phi2 level sets.

    Precondition: w <= 1 + psi_lambda at every sample in [-3, 0].
    Hypothesis:   |{w < phi0} ^ ((-3,-2) x B_1)| >= mu.
    Conclusion:   |{w > phi2} ^ ((-2,0) x torus)| <= delta   (first branch)
                  or |{phi0 < w < phi2} ^ ((-3,0) x torus)| >= gamma.
    """
    for name, val in (("mu", mu), ("delta", delta), ("gamma", gamma)):
        if not (val > 0.0):
            raise InvalidParameterError(f"{name} must be positive, got {val}")
    s = float(traj.order if order is None else order)
    grid = traj.grid
    psi_lam = barrier_on_grid(BarrierFamily("psi_lambda", order=s, lam=lam),
                              grid)

    idx = traj.require_window(-3.0, 0.0)
    envelope_breach = _first_exceedance(traj, idx, 1.0 + psi_lam)
    precondition_ok = envelope_breach is None

    measures = level_set_measures(traj, lam, order=s)
    hypothesis_ok = measures.below_phi0 >= mu
    first_branch = measures.above_phi2 <= delta
    second_branch = measures.intermediate >= gamma
    conclusion_ok = first_branch or second_branch
    branch = ("small-upper-set" if first_branch
              else "mass-gained" if second_branch else "violated")
    return LemmaReport(
        name="lemma2",
        verdict=_verdict(precondition_ok, hypothesis_ok, conclusion_ok),
        precondition_ok=precondition_ok, hypothesis_ok=hypothesis_ok,
        conclusion_ok=conclusion_ok,
        numbers={"below_phi0": measures.below_phi0,
                 "above_phi2": measures.above_phi2,
                 "intermediate": measures.intermediate,
                 "mu": mu, "delta": delta, "gamma": gamma, "lam": lam,
                 "branch": branch},
        first_violation=envelope_breach)
