"""Explicit monotone time stepping for nonlocal flows.

Linear runs integrate  w_t = (L w)(t);  nonlinear runs integrate

    theta_t(x) = sum_{z != 0} phi'(theta(x+z) - theta(x)) K(t, z) h^N

with a translation-invariant kernel.  Both use the step bound

    stable_dt = 0.9 / max_x ( lambda_phi * sum_{y != x} K(t, x, y) h^N )

where lambda_phi is the potential family's certified sup of phi'' (1 for
linear runs and the quadratic family).  Under that bound every Euler step is
a convex combination of node values, so min/max brackets, comparison, and
L^2/energy dissipation all hold; Heun is the average of two Euler maps and
inherits them.  A quadratic-potential nonlinear run reproduces the linear run
bitwise: both paths evaluate the same per-offset expressions in the same
order, and phi' is the identity.

Heun exists to measure temporal convergence order; production runs default to
Euler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import (
    InsufficientCoverageError,
    InvalidParameterError,
    NonFiniteStateError,
    UnstableStepError,
)
from .grid import DiscreteOperator, Field, Grid, make_operator
from .kernels import Kernel
from .potentials import Potential

STEPPERS = ("euler", "heun")


def _monotone_threshold(op: DiscreteOperator, potential: Potential | None,
                        t: float) -> float:
    """Largest dt keeping the explicit step a convex combination."""
    lam_phi = 1.0 if potential is None else potential.sup_d2
    if op.kernel.time_dependent:
        # kernel resamples over epochs; bound the row sums by the envelope
        deltas, dists = op.grid.offsets_within(
            op.kernel.spec.truncation_radius if math.isfinite(
                op.kernel.spec.truncation_radius) else None)
        unit = float(np.sum(op.kernel.envelope_profile(dists)))
        rs_max = op.kernel.upper_multiplier * unit \
            * op.grid.spacing ** op.grid.dimension
    else:
        rs_max = float(op.rowsums(t).max())
    denom = lam_phi * rs_max
    if not (denom > 0.0):
        raise InvalidParameterError(
            "kernel row sums vanish; no finite stable step exists")
    return 1.0 / denom


def stable_dt(kernel: Kernel, grid: Grid, potential: Potential | None = None,
              strategy: str = "banded", t: float = 0.0) -> float:
    """0.9 / max_x (lambda_phi * row sum); raises on a degenerate kernel."""
    op = make_operator(grid, kernel, strategy)
    return 0.9 * _monotone_threshold(op, potential, t)


def _check_dt(op: DiscreteOperator, potential: Potential | None,
              t: float, dt: float) -> None:
    if not (dt > 0.0) or not math.isfinite(dt):
        raise InvalidParameterError(f"dt must be positive and finite: {dt}")
    if dt > _monotone_threshold(op, potential, t) * (1.0 + 1e-12):
        raise UnstableStepError(
            f"dt={dt} exceeds the monotone-scheme stability bound at t={t}")


def _offset_rhs(op: DiscreteOperator, wg: np.ndarray, t: float,
                d1=None) -> np.ndarray:
    """sum_d K_d * g(w(x+d) - w(x)) * h^N on the grid-shaped array `wg`;
    g = identity for linear runs, phi' for nonlinear ones.  The linear and
    nonlinear paths share this loop so the quadratic degeneracy is bitwise."""
    vals = op.offset_values(t)
    shape = op.grid.shape
    axes = tuple(range(op.grid.dimension))
    acc = np.zeros_like(wg)
    for i, delta in enumerate(op.deltas):
        diff = np.roll(wg, tuple(-delta), axis=axes) - wg
        if d1 is not None:
            diff = d1(diff)
        kd = vals[i] if vals.ndim == 1 else vals[i].reshape(shape)
        acc += kd * diff
    return acc * op.grid.spacing ** op.grid.dimension


def _linear_rhs(op: DiscreteOperator, w: np.ndarray, t: float) -> np.ndarray:
    if op.strategy in ("dense", "spectral"):
        return op.apply(w, t)
    shape = op.grid.shape
    return _offset_rhs(op, w.reshape(shape), t).ravel()


def step_linear(op: DiscreteOperator, w: Field, t: float, dt: float) -> Field:
    """One explicit Euler step of the linear flow."""
    _check_dt(op, None, t, dt)
    out = w.values + dt * _linear_rhs(op, w.values, t)
    return Field(w.grid, out).require_finite("step_linear output")


def step_nonlinear(op: DiscreteOperator, potential: Potential, w: Field,
                   t: float, dt: float) -> Field:
    """One explicit Euler step of the nonlinear flow."""
    if not op.kernel.translation_invariant:
        raise InvalidParameterError(
            "nonlinear flow requires a translation-invariant kernel")
    if op.strategy != "banded":
        raise InvalidParameterError(
            "nonlinear stepping uses the banded strategy")
    _check_dt(op, potential, t, dt)
    wg = w.values.reshape(op.grid.shape)
    out = wg + dt * _offset_rhs(op, wg, t, d1=potential.d1)
    return Field(w.grid, out.ravel()).require_finite("step_nonlinear output")


def linear_energy(op: DiscreteOperator, w: np.ndarray, t: float = 0.0) -> float:
    """B[w, w] = sum over ordered pairs of K (w(x)-w(y))^2 h^(2N)."""
    vals = op.offset_values(t)
    shape = op.grid.shape
    wg = w.reshape(shape)
    axes = tuple(range(op.grid.dimension))
    total = 0.0
    for i, delta in enumerate(op.deltas):
        du = wg - np.roll(wg, tuple(-delta), axis=axes)
        kd = vals[i] if vals.ndim == 1 else vals[i].reshape(shape)
        total += float(np.sum(kd * du * du))
    return total * op.grid.spacing ** (2 * op.grid.dimension)


def nonlinear_energy(op: DiscreteOperator, potential: Potential,
                     w: np.ndarray, t: float = 0.0) -> float:
    """V(theta) = sum over ordered pairs of phi(theta(y)-theta(x)) K h^(2N)."""
    vals = op.offset_values(t)
    shape = op.grid.shape
    wg = w.reshape(shape)
    axes = tuple(range(op.grid.dimension))
    total = 0.0
    for i, delta in enumerate(op.deltas):
        du = np.roll(wg, tuple(-delta), axis=axes) - wg
        kd = vals[i] if vals.ndim == 1 else vals[i].reshape(shape)
        total += float(np.sum(kd * potential.value(du)))
    return total * op.grid.spacing ** (2 * op.grid.dimension)


@dataclass
class FlowProblem:
    """One flow specification; `initial` is a Field on `grid`."""

    kind: str                      # "linear" | "nonlinear"
    grid: Grid
    kernel: Kernel
    initial: Field
    t_start: float = 0.0
    t_end: float = 1.0
    potential: Potential | None = None
    stepper: str = "euler"
    strategy: str = "banded"
    dt_max: float | None = None    # optional extra cap (convergence studies)
    store_states: bool = False

    def __post_init__(self):
        if self.kind not in ("linear", "nonlinear"):
            raise InvalidParameterError(
                f"kind must be 'linear' or 'nonlinear': {self.kind}")
        if self.stepper not in STEPPERS:
            raise InvalidParameterError(
                f"unknown stepper {self.stepper!r}; expected euler or heun")
        if not (self.t_end > self.t_start):
            raise InvalidParameterError(
                f"empty time span [{self.t_start}, {self.t_end}]")
        if self.kind == "nonlinear":
            if self.potential is None:
                raise InvalidParameterError(
                    "nonlinear flow needs a potential")
            if not self.kernel.translation_invariant:
                raise InvalidParameterError(
                    "nonlinear flow requires a translation-invariant kernel")
        if not self.grid.compatible_with(self.initial.grid):
            raise InvalidParameterError("initial field grid != problem grid")


@dataclass
class Trajectory:
    """Flow output: sampled fields plus per-step dissipation records."""

    grid: Grid
    kind: str
    times: np.ndarray              # sample times, strictly increasing
    fields: np.ndarray             # (n_samples, n_nodes)
    step_times: np.ndarray         # (n_steps + 1,) state times
    dts: np.ndarray                # (n_steps,)
    l2: np.ndarray                 # per-state records, (n_steps + 1,)
    energy: np.ndarray
    vmin: np.ndarray
    vmax: np.ndarray
    mass: np.ndarray
    kernel: Kernel | None = None
    potential: Potential | None = None
    stepper: str = "euler"
    strategy: str = "banded"
    states: np.ndarray | None = None   # (n_steps + 1, n_nodes) when stored
    meta: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.fields = np.asarray(self.fields, dtype=np.float64)
        if self.fields.ndim != 2 or self.fields.shape[0] != self.times.size:
            raise InvalidParameterError(
                "fields must be (n_samples, n_nodes) matching times")
        if self.times.size >= 2 and not np.all(np.diff(self.times) > 0):
            raise InvalidParameterError("sample times must strictly increase")

    @property
    def n_samples(self) -> int:
        return int(self.times.size)

    @property
    def order(self) -> float:
        if self.kernel is None:
            return float(self.meta.get("order", 1.0))
        return self.kernel.spec.order

    def field(self, index: int) -> Field:
        return Field(self.grid, self.fields[index])

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Indices of samples with t in [t_lo, t_hi] (closed, fl-tolerant)."""
        tol = 1e-9 * max(1.0, float(self.times[-1] - self.times[0]))
        idx = np.where((self.times >= t_lo - tol)
                       & (self.times <= t_hi + tol))[0]
        return idx

    def require_window(self, t_lo: float, t_hi: float,
                       min_samples: int = 2) -> np.ndarray:
        idx = self.window(t_lo, t_hi)
        if idx.size < min_samples:
            raise InsufficientCoverageError(
                f"only {idx.size} samples cover [{t_lo}, {t_hi}]; "
                f"need >= {min_samples}")
        return idx

    def nearest_sample(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    @staticmethod
    def from_fields(grid: Grid, times, values, kind: str = "synthetic",
                    kernel: Kernel | None = None,
                    potential: Potential | None = None,
                    order: float | None = None) -> "Trajectory":
        """Wrap explicit (times, fields) data — used for injected diagnostics."""
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        n = times.size
        zeros = np.zeros(n)
        meta = {} if order is None else {"order": order}
        return Trajectory(
            grid=grid, kind=kind, times=times, fields=values,
            step_times=times.copy(), dts=np.diff(times),
            l2=zeros.copy(), energy=zeros.copy(), vmin=values.min(axis=1),
            vmax=values.max(axis=1), mass=zeros.copy(),
            kernel=kernel, potential=potential, meta=meta)


def run_flow(problem: FlowProblem, sample_every: int = 1) -> Trajectory:
    """Integrate the flow; samples every `sample_every`-th state (plus the
    final one) and records dt / L2 / energy / min / max / mass per state."""
    if sample_every < 1:
        raise InvalidParameterError(
            f"sample_every must be a positive integer: {sample_every}")
    grid, kernel = problem.grid, problem.kernel
    nonlinear = problem.kind == "nonlinear"
    strategy = "banded" if nonlinear else problem.strategy
    op = make_operator(grid, kernel, strategy)
    pot = problem.potential if nonlinear else None

    dt_target = 0.9 * _monotone_threshold(op, pot, problem.t_start)
    if problem.dt_max is not None:
        if not (problem.dt_max > 0):
            raise InvalidParameterError(f"dt_max must be positive: {problem.dt_max}")
        dt_target = min(dt_target, problem.dt_max)
    span = problem.t_end - problem.t_start
    n_steps = max(1, int(math.ceil(span / dt_target - 1e-12)))
    step_times = np.linspace(problem.t_start, problem.t_end, n_steps + 1)
    dts = np.diff(step_times)

    n = grid.n_nodes
    h_n = grid.spacing ** grid.dimension
    w = problem.initial.values.copy()
    l2 = np.empty(n_steps + 1)
    energy = np.empty(n_steps + 1)
    vmin = np.empty(n_steps + 1)
    vmax = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    sample_idx: list[int] = []
    sample_fields: list[np.ndarray] = []
    states = np.empty((n_steps + 1, n)) if problem.store_states else None

    energy_fn = (lambda v, t: nonlinear_energy(op, pot, v, t)) if nonlinear \
        else (lambda v, t: linear_energy(op, v, t))

    def rhs(v: np.ndarray, t: float) -> np.ndarray:
        if nonlinear:
            return _offset_rhs(op, v.reshape(grid.shape), t,
                               d1=pot.d1).ravel()
        return _linear_rhs(op, v, t)

    heun = problem.stepper == "heun"
    for i in range(n_steps + 1):
        t = float(step_times[i])
        l2[i] = math.sqrt(float(np.sum(w * w)) * h_n)
        energy[i] = energy_fn(w, t)
        vmin[i] = float(w.min())
        vmax[i] = float(w.max())
        mass[i] = float(np.sum(w)) * h_n
        if states is not None:
            states[i] = w
        if i % sample_every == 0 or i == n_steps:
            sample_idx.append(i)
            sample_fields.append(w.copy())
        if i == n_steps:
            break
        dt = float(dts[i])
        if heun:
            k1 = rhs(w, t)
            pred = w + dt * k1
            k2 = rhs(pred, t + dt)
            w = w + (0.5 * dt) * (k1 + k2)
        else:
            w = w + dt * rhs(w, t)
        if not np.all(np.isfinite(w)):
            raise NonFiniteStateError(
                f"non-finite state after step {i + 1}", step=i + 1)

    return Trajectory(
        grid=grid, kind=problem.kind,
        times=step_times[np.array(sample_idx)],
        fields=np.array(sample_fields),
        step_times=step_times, dts=dts, l2=l2, energy=energy,
        vmin=vmin, vmax=vmax, mass=mass,
        kernel=kernel, potential=problem.potential,
        stepper=problem.stepper, strategy=strategy,
        states=states,
        meta={"t_start": problem.t_start, "t_end": problem.t_end,
              "sample_every": sample_every, "n_steps": n_steps})
