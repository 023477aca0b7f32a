"""Difference quotients, derived kernels, rescaling, and oscillation decay.

The linearization transfer: if theta solves the nonlinear flow, then
w = D_e^h theta solves a linear flow whose kernel K^h carries a sigma-average
of phi'' along the segment between shifted differences of theta.  This module
builds that kernel, measures the transfer defect, rescales trajectories
parabolically (time ~ space^s), and estimates Holder exponents from the decay
of oscillations over nested cylinders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .degiorgi import BarrierFamily, barrier_on_grid, eval_barrier, LemmaReport
from .errors import (InsufficientCoverageError, InvalidParameterError,
                     NonLatticeStepError, TrajectoryMismatchError,
                     UnderResolvedError, WindowOutOfRangeError)
from .flow import Trajectory
from .grid import Field, Grid
from .kernels import Kernel
from .potentials import Potential

__all__ = [
    "difference_quotient",
    "DerivedKernel",
    "derived_kernel",
    "DerivedEnvelopeReport",
    "scan_derived_envelope",
    "TransferReport",
    "verify_linearization",
    "parabolic_rescale",
    "OscillationReport",
    "oscillation_decay",
    "RescaleLevel",
    "RescaleReport",
    "rescaling_sequence",
    "verify_lemma3",
    "check_scale_barrier",
]


def _lattice_steps(grid: Grid, h: float) -> int:
    """h as an exact positive multiple of the grid spacing."""
    if not (h > 0.0):
        raise NonLatticeStepError(f"step must be positive, got {h}")
    ratio = h / grid.spacing
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise NonLatticeStepError(
            f"step {h} is not an integer multiple of the spacing "
            f"{grid.spacing}")
    return m


def _check_axis(grid: Grid, e: int) -> int:
    if not (0 <= int(e) < grid.dimension):
        raise InvalidParameterError(
            f"direction {e} outside axes 0..{grid.dimension - 1}")
    return int(e)


def difference_quotient(theta: Field, e: int, h: float) -> Field:
    """Forward difference quotient (theta(x + h e) - theta(x)) / h."""
    grid = theta.grid
    axis = _check_axis(grid, e)
    m = _lattice_steps(grid, h)
    wg = theta.values.reshape(grid.shape)
    quot = (np.roll(wg, -m, axis=axis) - wg) / h
    return Field(grid, quot.ravel())


# ---------------------------------------------------------------------------
# derived kernel K^h

class DerivedKernel:
    """K^h(t,x,y) = K(y-x) * int_0^1 phi''((1-sigma) a + sigma b) dsigma

    with a = theta(y) - theta(x), b the same difference one lattice step h
    along axis e, and theta read from the latest trajectory sample at or
    before t.  The sigma-average is clamped to the potential's certified
    phi'' range, so the two-sided kernel envelope holds for every evaluation
    regardless of quadrature error.
    """

    def __init__(self, base: Kernel, potential: Potential,
                 traj: Trajectory, e: int, h: float, sigma_nodes: int = 8):
        if not base.translation_invariant:
            raise InvalidParameterError(
                "derived kernels require a translation-invariant base")
        if traj.grid.dimension != base.spec.dimension:
            raise InvalidParameterError(
                f"trajectory dimension {traj.grid.dimension} != kernel "
                f"dimension {base.spec.dimension}")
        if sigma_nodes < 2:
            raise InvalidParameterError(
                f"sigma_nodes must be >= 2, got {sigma_nodes}")
        self.base = base
        self.potential = potential
        self.traj = traj
        self.grid = traj.grid
        self.axis = _check_axis(traj.grid, e)
        self.step = float(h)
        self.steps = _lattice_steps(traj.grid, h)
        self.sigma_nodes = int(sigma_nodes)
        nodes, weights = np.polynomial.legendre.leggauss(self.sigma_nodes)
        self.sigma = 0.5 * (nodes + 1.0)
        self.weights = 0.5 * weights
        lo, hi = potential.d2_bounds
        self.quadratic = lo == hi
        self._factor_cache: dict[int, np.ndarray] = {}

    def sample_index(self, t: float) -> int:
        times = self.traj.times
        i = int(np.searchsorted(times, t + 1e-12)) - 1
        return min(max(i, 0), times.size - 1)

    def _theta_pair(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        theta = self.traj.fields[self.sample_index(t)].reshape(self.grid.shape)
        shifted = np.roll(theta, -self.steps, axis=self.axis)
        return theta.ravel(), shifted.ravel()

    def _sigma_average(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        u = ((1.0 - self.sigma)[:, None] * a[None, :]
             + self.sigma[:, None] * b[None, :])
        vals = self.weights @ self.potential.d2(u)
        lo, hi = self.potential.d2_bounds
        return np.clip(vals, lo, hi)

    def offset_factors(self, t: float,
                       deltas: np.ndarray) -> np.ndarray | None:
        """Per-offset sigma-average arrays, or None for quadratic phi
        (phi'' identically 1, so K^h is the base kernel verbatim)."""
        if self.quadratic:
            return None
        key = self.sample_index(t)
        cached = self._factor_cache.get(key)
        if cached is not None and cached.shape[0] == deltas.shape[0]:
            return cached
        theta, theta_sh = self._theta_pair(t)
        tg = theta.reshape(self.grid.shape)
        tsg = theta_sh.reshape(self.grid.shape)
        axes = tuple(range(self.grid.dimension))
        out = np.empty((deltas.shape[0], self.grid.n_nodes))
        for i, delta in enumerate(deltas):
            a = (np.roll(tg, tuple(-delta), axis=axes) - tg).ravel()
            b = (np.roll(tsg, tuple(-delta), axis=axes) - tsg).ravel()
            out[i] = self._sigma_average(a, b)
        self._factor_cache = {key: out}
        return out

    def evaluate(self, t: float, x, y) -> np.ndarray:
        """Pointwise K^h at lattice points x, y (arrays of coordinates)."""
        grid = self.grid
        xi = self._node_index(x)
        yi = self._node_index(y)
        coords = grid.node_coords()
        dist = np.linalg.norm(grid.wrap(coords[yi] - coords[xi]), axis=-1)
        base_vals = self.base.evaluate(t, coords[xi], coords[yi], dist=dist)
        if self.quadratic:
            return base_vals
        theta, theta_sh = self._theta_pair(t)
        a = theta[yi] - theta[xi]
        b = theta_sh[yi] - theta_sh[xi]
        return base_vals * self._sigma_average(a, b)

    def _node_index(self, pts) -> np.ndarray:
        grid = self.grid
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if p.shape[-1] != grid.dimension:
            raise InvalidParameterError(
                f"points must have {grid.dimension} coordinates")
        idx = p / grid.spacing
        near = np.round(idx)
        if np.max(np.abs(idx - near)) > 1e-6:
            raise NonLatticeStepError(
                "derived kernels evaluate at lattice nodes only")
        near = near.astype(np.int64) % grid.points_per_axis
        if grid.dimension == 1:
            return near[:, 0]
        return near[:, 0] * grid.points_per_axis + near[:, 1]


def derived_kernel(base: Kernel, potential: Potential, theta_traj: Trajectory,
                   e: int, h: float, sigma_nodes: int = 8) -> DerivedKernel:
    return DerivedKernel(base, potential, theta_traj, e, h,
                         sigma_nodes=sigma_nodes)


@dataclass(frozen=True)
class DerivedEnvelopeReport:
    sample_count: int
    ratio_min: float
    ratio_max: float
    band_lo: float
    band_hi: float
    violations: int
    step_factors: tuple

    @property
    def passed(self) -> bool:
        return self.violations == 0


def scan_derived_envelope(potential: Potential, theta_traj: Trajectory,
                          e: int = 0, step_factors=(1, 2, 4),
                          sample_count: int = 10000,
                          seed: int = 20260817,
                          sigma_nodes: int = 8) -> DerivedEnvelopeReport:
    """Two-sided envelope scan of K^h over random lattice pairs and times.

    The certified band is the measurable-kernel tier: the base multiplier and
    the phi'' average each live in [Lambda^{-1/2}, Lambda^{1/2}], so their
    product stays within [Lambda^{-1}, Lambda] for every h — checked here
    with zero tolerance.
    """
    base = theta_traj.kernel
    if base is None:
        raise TrajectoryMismatchError("trajectory carries no kernel")
    lam = base.spec.ellipticity
    s = base.spec.order
    grid = theta_traj.grid
    n_dim = grid.dimension
    rng = np.random.default_rng(seed)
    coords = grid.node_coords()
    t_lo, t_hi = float(theta_traj.times[0]), float(theta_traj.times[-1])

    ratio_min, ratio_max = math.inf, -math.inf
    violations = 0
    per_h = max(1, sample_count // len(tuple(step_factors)))
    band_lo, band_hi = 1.0 / lam, lam
    batch = 256
    for mf in step_factors:
        dk = DerivedKernel(base, potential, theta_traj, e, mf * grid.spacing,
                           sigma_nodes=sigma_nodes)
        got = 0
        while got < per_h:
            # one frozen time per batch keeps the evaluation vectorized
            t = float(rng.uniform(t_lo, t_hi))
            n = min(batch, per_h - got) * 2
            xi = rng.integers(0, grid.n_nodes, size=n)
            yi = rng.integers(0, grid.n_nodes, size=n)
            d = np.linalg.norm(grid.wrap(coords[yi] - coords[xi]), axis=-1)
            keep = (d > 0.0) & (d <= base.spec.truncation_radius)
            xi, yi, d = xi[keep], yi[keep], d[keep]
            take = min(xi.size, per_h - got)
            if take == 0:
                continue
            xi, yi, d = xi[:take], yi[:take], d[:take]
            vals = dk.evaluate(t, coords[xi], coords[yi])
            ratios = vals * d ** (n_dim + s) / ((1.0 - 0.5 * s)
                                                * base.spec.multiplier)
            ratio_min = min(ratio_min, float(np.min(ratios)))
            ratio_max = max(ratio_max, float(np.max(ratios)))
            violations += int(np.sum((ratios < band_lo) | (ratios > band_hi)))
            got += take
    return DerivedEnvelopeReport(
        sample_count=per_h * len(tuple(step_factors)),
        ratio_min=ratio_min, ratio_max=ratio_max,
        band_lo=band_lo, band_hi=band_hi, violations=violations,
        step_factors=tuple(step_factors))


# ---------------------------------------------------------------------------
# linearization transfer

@dataclass(frozen=True)
class TransferReport:
    max_defect: float
    defect_times: np.ndarray
    defect_curve: np.ndarray
    # True when the linear update reused the base kernel's per-offset values
    # bit for bit (quadratic potential).  The defect itself still carries a
    # ~1e-15 floor: quotient-then-step and step-then-quotient round
    # differently even when every coefficient matches.
    bitwise: bool
    quadratic: bool
    step: float
    axis: int
    n_steps: int
    freeze_interval: float      # sample cadence the kernel is frozen on
    sigma_nodes: int


def verify_linearization(theta_traj: Trajectory, e: int = 0,
                         h: float | None = None,
                         sigma_nodes: int = 8) -> TransferReport:
    """Integrate the linear flow of w = D_e^h theta with kernel K^h.

    The kernel is frozen from the latest trajectory *sample* at or before
    each step time, so the transfer defect carries an O(sample spacing) lag
    term on top of the sigma-quadrature floor; refining dt (with the sampling
    stride fixed) shrinks it at first order.  For quadratic phi the derived
    kernel is the base kernel verbatim and the linear update reuses the same
    per-offset values, bitwise.
    """
    if theta_traj.kind != "nonlinear":
        raise TrajectoryMismatchError(
            f"transfer needs a nonlinear trajectory, got {theta_traj.kind!r}")
    if theta_traj.stepper != "euler":
        raise TrajectoryMismatchError(
            "transfer is defined for the euler stepper")
    if theta_traj.states is None:
        raise TrajectoryMismatchError(
            "transfer needs per-step states (store_states=True)")
    base = theta_traj.kernel
    potential = theta_traj.potential
    if base is None or potential is None:
        raise TrajectoryMismatchError(
            "trajectory must carry its kernel and potential")
    grid = theta_traj.grid
    if h is None:
        h = grid.spacing
    dk = DerivedKernel(base, potential, theta_traj, e, h,
                       sigma_nodes=sigma_nodes)
    axis = dk.axis

    deltas, dists = grid.offsets_within(base.spec.truncation_radius)
    kd = base.radial_profile(dists)                 # per-offset scalars
    h_n = grid.spacing ** grid.dimension
    axes = tuple(range(grid.dimension))

    step_times = theta_traj.step_times
    dts = np.diff(step_times)
    sample_pos = np.searchsorted(step_times, theta_traj.times - 1e-12)

    w = difference_quotient(
        Field(grid, theta_traj.states[0]), e, h).values.reshape(grid.shape)
    defects = np.empty(theta_traj.n_samples)
    next_cmp = 0

    def compare(state_row: int, w_now: np.ndarray) -> float:
        ref = difference_quotient(
            Field(grid, theta_traj.fields[state_row]), e, h).values
        return float(np.max(np.abs(ref - w_now.ravel())))

    for n in range(step_times.size):
        while next_cmp < sample_pos.size and sample_pos[next_cmp] == n:
            defects[next_cmp] = compare(next_cmp, w)
            next_cmp += 1
        if n == dts.size:
            break
        factors = dk.offset_factors(step_times[n], deltas)
        acc = np.zeros_like(w)
        for i, delta in enumerate(deltas):
            diff = np.roll(w, tuple(-delta), axis=axes) - w
            if factors is None:
                acc += kd[i] * diff
            else:
                acc += (kd[i] * factors[i].reshape(grid.shape)) * diff
        w = w + dts[n] * (acc * h_n)

    max_defect = float(np.max(defects))
    return TransferReport(
        max_defect=max_defect, defect_times=theta_traj.times.copy(),
        defect_curve=defects, bitwise=dk.quadratic,
        quadratic=dk.quadratic, step=float(h), axis=axis,
        n_steps=int(dts.size),
        freeze_interval=float(np.max(np.diff(theta_traj.times))),
        sigma_nodes=sigma_nodes)


# ---------------------------------------------------------------------------
# parabolic rescaling

def parabolic_rescale(traj: Trajectory, center, rho: float,
                      order: float | None = None) -> Trajectory:
    """View w(t0 + rho^s tau, x0 + rho xi) on a grid with side L / rho.

    The view keeps all M^N nodes: node xi_j of the rescaled grid lands on
    parent coordinate x0 + j * h exactly, so an on-lattice centre needs no
    interpolation — off-lattice centres use periodic linear interpolation
    (convex, so min/max are preserved) and set meta["interpolated"].
    """
    if not (rho > 0.0):
        raise InvalidParameterError(f"rescale factor must be > 0, got {rho}")
    s = float(traj.order if order is None else order)
    t0, x0 = center
    t0 = float(t0)
    grid = traj.grid
    span = float(traj.times[-1] - traj.times[0])
    tol = 1e-9 * max(1.0, span)
    if t0 < traj.times[0] - tol or t0 > traj.times[-1] + tol:
        raise WindowOutOfRangeError(
            f"centre time {t0} outside sampled span "
            f"[{traj.times[0]}, {traj.times[-1]}]")
    keep = np.where(traj.times <= t0 + tol)[0]
    if keep.size < 2:
        raise WindowOutOfRangeError(
            f"only {keep.size} samples at or before t0={t0}")

    x0v = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0v.shape != (grid.dimension,):
        raise InvalidParameterError(
            f"centre must have {grid.dimension} coordinates")
    idx_f = x0v / grid.spacing
    idx_i = np.floor(idx_f).astype(np.int64)
    frac = idx_f - idx_i
    interpolated = bool(np.any(np.abs(frac) > 1e-9))

    stack = traj.fields[keep].reshape((keep.size,) + grid.shape)
    for ax in range(grid.dimension):
        shift = int(idx_i[ax])
        f = float(frac[ax])
        lo = np.roll(stack, -shift, axis=1 + ax)
        if f > 1e-9:
            hi = np.roll(stack, -(shift + 1), axis=1 + ax)
            stack = (1.0 - f) * lo + f * hi
        else:
            stack = lo
    view_fields = stack.reshape(keep.size, grid.n_nodes)
    view_times = (traj.times[keep] - t0) / rho ** s

    view_grid = Grid(dimension=grid.dimension,
                     side_length=grid.side_length / rho,
                     points_per_axis=grid.points_per_axis)
    induced = None
    if traj.kernel is not None:
        import dataclasses
        spec = traj.kernel.spec
        induced_spec = dataclasses.replace(
            spec,
            truncation_radius=(spec.truncation_radius / rho
                               if math.isfinite(spec.truncation_radius)
                               else spec.truncation_radius),
            cell_size=spec.cell_size / rho,
            epoch_length=spec.epoch_length / rho ** s)
        induced = Kernel(induced_spec)
    view = Trajectory.from_fields(
        view_grid, view_times, view_fields, kind="rescaled-view",
        kernel=induced, potential=traj.potential, order=s)
    view.meta.update({
        "rho": float(rho), "center_time": t0,
        "center_point": [float(v) for v in x0v],
        "interpolated": interpolated, "order": s,
        "parent_kind": traj.kind,
    })
    return view


# ---------------------------------------------------------------------------
# oscillation decay and the Holder exponent

@dataclass(frozen=True)
class OscillationReport:
    center_time: float
    center_point: tuple
    scale: float                # K_sc
    levels: int
    order: float
    radii: np.ndarray
    depths: np.ndarray
    osc: np.ndarray
    node_counts: np.ndarray
    sample_counts: np.ndarray
    alpha: float
    r_squared: float
    degenerate: bool


def _fit_decay(osc: np.ndarray, scale: float, s: float
               ) -> tuple[float, float, bool]:
    """Least-squares slope of ln(osc_k / osc_0) against k ln(scale^s).

    Using ratios keeps the fit bitwise invariant under exact rescalings of
    the data (power-of-two affine maps leave every ratio unchanged).
    """
    positive = osc > 0.0
    n_pos = int(np.argmin(positive)) if not positive.all() else osc.size
    if n_pos < 2:
        return math.inf, math.nan, True
    y = np.log(osc[:n_pos] / osc[0])
    z = np.arange(n_pos) * (s * math.log(scale))
    zc = z - z.mean()
    yc = y - y.mean()
    denom = float(np.dot(zc, zc))
    slope = float(np.dot(zc, yc) / denom)
    ss_res = float(np.sum((yc - slope * zc) ** 2))
    ss_tot = float(np.dot(yc, yc))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return slope, r2, False


def oscillation_decay(traj: Trajectory, center, scale: float, levels: int,
                      order: float | None = None) -> OscillationReport:
    """Oscillation over nested cylinders (t0 - scale^{ks}, t0] x B_{scale^k}.

    Nesting makes osc_k nonincreasing exactly; the fitted slope alpha is the
    Holder exponent when the decay is geometric.
    """
    if levels < 3:
        raise InvalidParameterError(f"need >= 3 levels, got {levels}")
    if not (0.0 < scale < 1.0):
        raise InvalidParameterError(
            f"scale factor must lie in (0, 1), got {scale}")
    s = float(traj.order if order is None else order)
    t0, x0 = center
    t0 = float(t0)
    grid = traj.grid
    x0v = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    dist = grid.distance_to(x0v)
    span = float(traj.times[-1] - traj.times[0])
    tol = 1e-9 * max(1.0, span)

    ks = np.arange(levels)
    radii = scale ** ks
    depths = scale ** (ks * s)
    osc = np.empty(levels)
    node_counts = np.empty(levels, dtype=np.int64)
    sample_counts = np.empty(levels, dtype=np.int64)
    for k in range(levels):
        nodes = dist < radii[k]
        t_mask = (traj.times > t0 - depths[k] - tol) & \
                 (traj.times <= t0 + tol)
        node_counts[k] = int(np.sum(nodes))
        sample_counts[k] = int(np.sum(t_mask))
        if node_counts[k] < 8 or sample_counts[k] < 8:
            raise UnderResolvedError(
                f"cylinder level {k} holds {node_counts[k]} nodes and "
                f"{sample_counts[k]} samples; need >= 8 of each")
        vals = traj.fields[np.ix_(t_mask, nodes)]
        osc[k] = float(np.max(vals) - np.min(vals))
    alpha, r2, degenerate = _fit_decay(osc, scale, s)
    return OscillationReport(
        center_time=t0, center_point=tuple(float(v) for v in x0v),
        scale=float(scale), levels=levels, order=s, radii=radii,
        depths=depths, osc=osc, node_counts=node_counts,
        sample_counts=sample_counts, alpha=alpha, r_squared=r2,
        degenerate=degenerate)


# ---------------------------------------------------------------------------
# normalized rescaling sequence and the oscillation lemma

@dataclass(frozen=True)
class RescaleLevel:
    level: int
    sup_norm: float
    mean: float
    envelope_ok: bool
    nodes_in_unit_ball: int
    samples_in_window: int
    first_violation: dict | None


@dataclass(frozen=True)
class RescaleReport:
    levels: list
    views: list
    lam: float
    lam_star: float
    scale: float
    eps: float
    eps_floor_bound: bool
    floor_level: int | None      # level at which resolution ran out
    first_envelope_violation: int | None
    stabilized: bool


def rescaling_sequence(traj: Trajectory, lam: float, lam_star: float,
                       scale: float, eps: float | None = None,
                       max_levels: int = 8,
                       order: float | None = None) -> RescaleReport:
    """w_{k+1}(t,x) = (w_k(scale^s t, scale x) - mean_k) / (1 - lam_star/4).

    mean_k is the plain node/time average of w_k over [-1,0] x B_1.  Each
    level is checked against the +-(1 + psi_{eps,lam}) envelope; a violation
    is recorded (not raised).  Levels stop at max_levels or when the unit
    cylinder falls below 8 nodes / 8 samples.
    """
    if not (0.0 < lam < 1.0 / 3.0):
        raise InvalidParameterError(f"lambda must be in (0, 1/3), got {lam}")
    if not (0.0 < lam_star < 1.0):
        raise InvalidParameterError(
            f"lambda_star must be in (0, 1), got {lam_star}")
    if not (0.0 < scale < 1.0):
        raise InvalidParameterError(
            f"scale factor must be in (0, 1), got {scale}")
    s = float(traj.order if order is None else order)
    eps_floor = 1e-6
    floor_bound = eps is None or eps < eps_floor
    eps_eff = max(eps_floor, eps) if eps is not None else eps_floor
    traj.require_window(-3.0, 0.0)

    shrink = 1.0 - 0.25 * lam_star
    current = traj
    records: list[RescaleLevel] = []
    views: list[Trajectory] = []
    first_violation_level = None
    floor_level = None
    for k in range(max_levels + 1):
        grid = current.grid
        barrier = 1.0 + barrier_on_grid(
            BarrierFamily("psi_eps_lambda", order=s, lam=lam, eps=eps_eff),
            grid)
        idx_env = current.window(-3.0, 0.0)
        block = current.fields[idx_env]
        over = np.abs(block) - barrier[None, :]
        envelope_ok = bool(np.all(over <= 0.0))
        violation = None
        if not envelope_ok:
            flat = int(np.argmax(over > 0.0))
            row, node = divmod(flat, grid.n_nodes)
            violation = {
                "time": float(current.times[idx_env[row]]),
                "node": node,
                "value": float(block[row, node]),
                "bound": float(barrier[node]),
            }
            if first_violation_level is None:
                first_violation_level = k

        ball = grid.ball(1.0)
        idx_mean = current.window(-1.0, 0.0)
        n_nodes_ball = int(np.sum(ball))
        n_samp = int(idx_mean.size)
        mean_k = float(np.mean(current.fields[np.ix_(idx_mean, ball)])) \
            if n_nodes_ball and n_samp else math.nan
        records.append(RescaleLevel(
            level=k, sup_norm=float(np.max(np.abs(block))), mean=mean_k,
            envelope_ok=envelope_ok, nodes_in_unit_ball=n_nodes_ball,
            samples_in_window=n_samp, first_violation=violation))
        views.append(current)
        if k == max_levels:
            break

        # resolution check for the next level's unit cylinder
        next_nodes = int(np.sum(grid.origin_distance() < scale))
        next_samples = int(np.sum(
            (current.times >= -scale ** s - 1e-12) & (current.times <= 1e-12)))
        if next_nodes < 8 or next_samples < 8:
            floor_level = k
            break
        zoom = parabolic_rescale(current, (0.0, np.zeros(grid.dimension)),
                                 scale, order=s)
        current = Trajectory.from_fields(
            zoom.grid, zoom.times, (zoom.fields - mean_k) / shrink,
            kind="rescaled-view", kernel=zoom.kernel,
            potential=zoom.potential, order=s)
        current.meta.update(zoom.meta)

    sups = [r.sup_norm for r in records]
    stabilized = len(sups) >= 2 and sups[-1] <= sups[0] + 1e-12
    return RescaleReport(
        levels=records, views=views, lam=lam, lam_star=lam_star,
        scale=scale, eps=eps_eff, eps_floor_bound=floor_bound,
        floor_level=floor_level,
        first_envelope_violation=first_violation_level,
        stabilized=stabilized)


def verify_lemma3(traj: Trajectory, eps: float, lam: float, lam_star: float,
                  order: float | None = None) -> LemmaReport:
    """Two-sided barrier envelope forces oscillation <= 2 - lam_star.

    Hypothesis: -1 - psi_{eps,lam} <= w <= 1 + psi_{eps,lam} on [-3, 0].
    Conclusion: sup - inf over [-1,0] x B_1 is at most 2 - lam_star.
    """
    if not (eps > 0.0):
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if not (0.0 < lam_star < 1.0):
        raise InvalidParameterError(
            f"lambda_star must be in (0, 1), got {lam_star}")
    s = float(traj.order if order is None else order)
    grid = traj.grid
    barrier = 1.0 + barrier_on_grid(
        BarrierFamily("psi_eps_lambda", order=s, lam=lam, eps=eps), grid)
    idx = traj.require_window(-3.0, 0.0)
    block = traj.fields[idx]
    over = np.abs(block) - barrier[None, :]
    hypothesis_ok = bool(np.all(over <= 0.0))
    violation = None
    if not hypothesis_ok:
        flat = int(np.argmax(over > 0.0))
        row, node = divmod(flat, grid.n_nodes)
        violation = {"time": float(traj.times[idx[row]]), "node": node,
                     "value": float(block[row, node]),
                     "bound": float(barrier[node])}

    idx_late = traj.require_window(-1.0, 0.0)
    ball = grid.ball(1.0)
    vals = traj.fields[np.ix_(idx_late, ball)]
    osc = float(np.max(vals) - np.min(vals))
    bound = 2.0 - lam_star
    conclusion_ok = osc <= bound
    # conclusion-first, like the other detectors: a true conclusion passes
    # regardless of the envelope; a broken one is a failure only in scope.
    verdict = ("pass" if conclusion_ok
               else "fail" if hypothesis_ok else "hypothesis-violated")
    return LemmaReport(
        name="lemma3", verdict=verdict, precondition_ok=hypothesis_ok,
        hypothesis_ok=hypothesis_ok, conclusion_ok=conclusion_ok,
        numbers={"oscillation": osc, "bound": bound, "eps": eps,
                 "lam": lam, "lam_star": lam_star, "order": s},
        first_violation=violation if violation is not None else (
            None if conclusion_ok else {"oscillation": osc, "bound": bound}))


def check_scale_barrier(lam: float, lam_star: float, eps: float,
                        scale: float, order: float,
                        n_points: int = 4096) -> dict:
    """Report whether (1/(1-lam_star/2)) psi_{eps,lam}(scale*r) <= psi_{eps,lam}(r)
    holds for r >= 1/scale, on a log-spaced radial grid.

    The scale factor is calibrated, not derived, so this inequality is
    reported rather than enforced.  `lam_star_threshold` is the largest
    lam_star for which the inequality holds on this radial grid: the barrier
    quotient psi(scale*r)/psi(r) climbs toward scale^eps at large r, so the
    threshold is 2*(1 - sup quotient), and calibrations that want the
    inequality to hold must stay below it.
    """
    b = BarrierFamily("psi_eps_lambda", order=order, lam=lam, eps=eps)
    support = b.support_radius
    r = np.geomspace(1.0 / scale, max(100.0 * support, 1e4), n_points)
    num = eval_barrier(b, scale * r)
    rhs = eval_barrier(b, r)
    lhs = num / (1.0 - 0.5 * lam_star)
    gap = lhs - rhs
    worst = int(np.argmax(gap))
    active = num > 0.0          # psi nondecreasing, so rhs > 0 there too
    if np.any(active):
        sup_quotient = float(np.max(num[active] / rhs[active]))
        threshold = max(0.0, 2.0 * (1.0 - sup_quotient))
    else:
        threshold = 2.0         # barrier vanishes on the whole probe range
    return {
        "holds": bool(np.all(gap <= 0.0)),
        "max_violation": float(max(0.0, gap[worst])),
        "worst_radius": float(r[worst]),
        "support_radius": float(support),
        "scale": float(scale),
        "lam_star_threshold": threshold,
    }
