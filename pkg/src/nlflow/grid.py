"""Periodic lattice, fields, and discrete nonlocal operators.

The torus [0, L)^N is sampled with M points per axis (lexicographic layout,
spacing h = L/M).  The discrete operator is the midpoint-rule sum

    (L w)(x) = sum_{y != x} [w(y) - w(x)] K(t, x, y) h^N

with the diagonal excluded and y running over lattice nodes at periodic
displacements.  When L > 2 * truncation_radius at most one periodic image of
any node lies inside the kernel support, so the sum needs no image folding;
untruncated kernels use the nearest-image displacement.

Three evaluation strategies give the same quadrature:

  dense     explicit n x n matrix (the oracle; small grids)
  banded    per-offset neighbor sums within the truncation radius
  spectral  Fourier multiplier; translation-invariant untruncated kernels only

Kernel values are always evaluated at canonical node coordinates in [0, L)^N
with the periodic distance passed explicitly, so rough-kernel symmetry holds
exactly at wrap-around pairs and banded/dense see bitwise-identical values.
All reductions run in fixed lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import (
    DimensionMismatchError,
    GridMismatchError,
    InvalidParameterError,
    NonFiniteStateError,
    StrategyMismatchError,
    UnsupportedDimensionError,
)
from .kernels import Kernel

STRATEGIES = ("dense", "banded", "spectral")


@dataclass
class Grid:
    """Periodic lattice: N in {1, 2}, side L, M >= 8 points per axis."""

    dimension: int = 1
    side_length: float = 16.0
    points_per_axis: int = 256
    _caches: dict = dataclass_field(default_factory=dict, init=False,
                                    repr=False, compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise UnsupportedDimensionError(
                f"dimension must be 1 or 2, got {self.dimension}")
        if int(self.points_per_axis) != self.points_per_axis or \
                self.points_per_axis < 8:
            raise InvalidParameterError(
                f"points_per_axis must be an integer >= 8: {self.points_per_axis}")
        self.points_per_axis = int(self.points_per_axis)
        if not (self.side_length > 0.0):
            raise InvalidParameterError(
                f"side_length must be positive: {self.side_length}")

    @property
    def spacing(self) -> float:
        return self.side_length / self.points_per_axis

    @property
    def n_nodes(self) -> int:
        return self.points_per_axis ** self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.spacing

    def node_coords(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, N), lexicographic order."""
        if "coords" not in self._caches:
            ax = self.axis_coords()
            if self.dimension == 1:
                coords = ax[:, None]
            else:
                a, b = np.meshgrid(ax, ax, indexing="ij")
                coords = np.column_stack([a.ravel(), b.ravel()])
            self._caches["coords"] = coords
        return self._caches["coords"]

    def wrap(self, delta: np.ndarray) -> np.ndarray:
        """Map coordinate differences to the minimal image in (-L/2, L/2]."""
        L = self.side_length
        return -((-np.asarray(delta) + 0.5 * L) % L - 0.5 * L)

    def distance_to(self, center) -> np.ndarray:
        """Periodic distance from every node to `center` (coords), flat."""
        c = np.atleast_1d(np.asarray(center, dtype=np.float64))
        if c.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"center shape {c.shape} != ({self.dimension},)")
        d = self.wrap(self.node_coords() - c)
        return np.linalg.norm(d, axis=-1)

    def origin_distance(self) -> np.ndarray:
        if "origin_dist" not in self._caches:
            self._caches["origin_dist"] = self.distance_to(
                np.zeros(self.dimension))
        return self._caches["origin_dist"]

    def ball(self, radius: float, center=None) -> np.ndarray:
        """Boolean node mask of the open periodic ball of given radius."""
        if center is None:
            dist = self.origin_distance()
        else:
            dist = self.distance_to(center)
        return dist < radius

    def offsets_within(self, radius: float | None
                       ) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero lattice offsets with periodic length <= radius.

        Returns (deltas, dists): integer index shifts, shape (n_off, N), in
        lexicographic order, and their periodic lengths in coordinate units.
        radius=None keeps every nonzero offset (nearest-image convention).
        """
        key = ("offsets", radius)
        if key in self._caches:
            return self._caches[key]
        M = self.points_per_axis
        steps = np.arange(M)
        signed = np.where(steps <= M // 2, steps, steps - M)
        if self.dimension == 1:
            deltas = signed[:, None]
        else:
            a, b = np.meshgrid(signed, signed, indexing="ij")
            deltas = np.column_stack([a.ravel(), b.ravel()])
        dists = np.linalg.norm(deltas, axis=-1) * self.spacing
        keep = dists > 0.0
        if radius is not None and math.isfinite(radius):
            keep &= dists <= radius
        deltas, dists = deltas[keep], dists[keep]
        self._caches[key] = (deltas, dists)
        return deltas, dists

    def compatible_with(self, other: "Grid") -> bool:
        return (self.dimension == other.dimension
                and self.points_per_axis == other.points_per_axis
                and self.side_length == other.side_length)


def default_grid(dimension: int = 1) -> Grid:
    if dimension == 1:
        return Grid(1, 16.0, 256)
    if dimension == 2:
        return Grid(2, 16.0, 64)
    raise UnsupportedDimensionError(f"dimension must be 1 or 2, got {dimension}")


@dataclass
class Field:
    """Flat float64 values on a grid (lexicographic node order)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.grid.n_nodes:
            raise DimensionMismatchError(
                f"field has {self.values.size} values, grid has "
                f"{self.grid.n_nodes} nodes")

    def require_finite(self, context: str = "field") -> "Field":
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteStateError(f"non-finite values in {context}")
        return self

    def l2_norm(self) -> float:
        h_n = self.grid.spacing ** self.grid.dimension
        return math.sqrt(float(np.sum(self.values * self.values)) * h_n)

    def mass(self) -> float:
        return float(np.sum(self.values)) * self.grid.spacing ** self.grid.dimension

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


class DiscreteOperator:
    """Bound (grid, kernel, strategy) triple with cached quadrature data."""

    def __init__(self, grid: Grid, kernel: Kernel, strategy: str = "banded"):
        if strategy not in STRATEGIES:
            raise InvalidParameterError(
                f"unknown strategy {strategy!r}; expected one of "
                f"{', '.join(STRATEGIES)}")
        if grid.dimension != kernel.spec.dimension:
            raise GridMismatchError(
                f"grid dimension {grid.dimension} != kernel dimension "
                f"{kernel.spec.dimension}")
        r_tr = kernel.spec.truncation_radius
        if math.isfinite(r_tr) and not (grid.side_length > 2.0 * r_tr):
            raise GridMismatchError(
                f"torus width {grid.side_length} must exceed twice the "
                f"truncation radius {r_tr} so only one periodic image interacts")
        if strategy == "spectral":
            if not kernel.translation_invariant:
                raise StrategyMismatchError(
                    "spectral strategy requires a translation-invariant kernel")
            if math.isfinite(r_tr):
                raise StrategyMismatchError(
                    "spectral strategy requires an untruncated kernel "
                    "(truncation_radius = inf)")
        self.grid = grid
        self.kernel = kernel
        self.strategy = strategy
        self._cache: dict = {}
        radius = r_tr if math.isfinite(r_tr) else None
        if strategy in ("banded", "dense"):
            self.deltas, self.dists = grid.offsets_within(radius)
            if self.deltas.shape[0] == 0:
                raise GridMismatchError(
                    "no lattice neighbors inside the truncation radius; "
                    "refine the grid")
        else:
            self.deltas = self.dists = None

    # -- keys: static kernels cache under epoch None, epoch-hashed under index
    def _epoch_key(self, t: float):
        if not self.kernel.time_dependent:
            return None
        return math.floor(float(t) / self.kernel.spec.epoch_length)

    def offset_values(self, t: float = 0.0) -> np.ndarray:
        """Kernel values per offset: (n_off,) scalars for translation-invariant
        kernels, else (n_off, n_nodes) with rows matching self.deltas."""
        if self.strategy == "spectral":
            raise StrategyMismatchError(
                "offset_values is undefined for the spectral strategy")
        key = ("offvals", self._epoch_key(t))
        if key in self._cache:
            return self._cache[key]
        if self.kernel.translation_invariant:
            vals = self.kernel.radial_profile(self.dists)
        else:
            coords = self.grid.node_coords()
            L = self.grid.side_length
            h = self.grid.spacing
            vals = np.empty((self.deltas.shape[0], self.grid.n_nodes))
            for i, (delta, dist) in enumerate(zip(self.deltas, self.dists)):
                ycoords = (coords + delta * h) % L
                vals[i] = self.kernel.evaluate(t, coords, ycoords, dist=dist)
        self._cache.clear()
        self._cache[key] = vals
        return vals

    def matrix(self, t: float = 0.0) -> np.ndarray:
        """Dense operator matrix A with A[i, j] = K(t, x_i, x_j) h^N, zero
        diagonal (dense strategy only; the double-sum oracle)."""
        if self.strategy != "dense":
            raise StrategyMismatchError("matrix() requires the dense strategy")
        key = ("matrix", self._epoch_key(t))
        if key in self._cache:
            return self._cache[key]
        grid, kern = self.grid, self.kernel
        coords = grid.node_coords()
        n = grid.n_nodes
        h_n = grid.spacing ** grid.dimension
        r_tr = kern.spec.truncation_radius
        A = np.zeros((n, n))
        block = max(1, min(n, 2 ** 22 // n + 1))
        for start in range(0, n, block):
            stop = min(n, start + block)
            xi = coords[start:stop, None, :]
            xj = coords[None, :, :]
            dist = np.linalg.norm(grid.wrap(xj - xi), axis=-1)
            vals = kern.evaluate(t, np.broadcast_to(xi, dist.shape + (grid.dimension,)),
                                 np.broadcast_to(xj, dist.shape + (grid.dimension,)),
                                 dist=dist)
            if math.isfinite(r_tr):
                vals = np.where(dist <= r_tr, vals, 0.0)
            A[start:stop] = vals * h_n
        np.fill_diagonal(A, 0.0)
        self._cache.clear()
        self._cache[key] = A
        return A

    def multipliers(self) -> np.ndarray:
        """Fourier symbol of the operator (spectral strategy only), flat."""
        if self.strategy != "spectral":
            raise StrategyMismatchError(
                "multipliers() requires the spectral strategy")
        if "symbol" not in self._cache:
            grid = self.grid
            row = self.kernel.radial_profile(grid.origin_distance())
            row[0] = 0.0
            row_grid = row.reshape(grid.shape)
            h_n = grid.spacing ** grid.dimension
            m = (np.fft.fftn(row_grid).real - row.sum()) * h_n
            self._cache["symbol"] = m
        return self._cache["symbol"]

    def rowsums(self, t: float = 0.0) -> np.ndarray:
        """sum_{y != x} K(t, x, y) h^N per node, flat."""
        h_n = self.grid.spacing ** self.grid.dimension
        if self.strategy == "spectral":
            row = self.kernel.radial_profile(self.grid.origin_distance())
            row[0] = 0.0
            return np.full(self.grid.n_nodes, row.sum() * h_n)
        if self.strategy == "dense":
            return self.matrix(t).sum(axis=1)
        vals = self.offset_values(t)
        if vals.ndim == 1:
            return np.full(self.grid.n_nodes, float(vals.sum()) * h_n)
        return vals.sum(axis=0) * h_n

    def apply(self, values: np.ndarray, t: float = 0.0) -> np.ndarray:
        """(L w) at every node for flat float64 `values`."""
        w = np.asarray(values, dtype=np.float64).ravel()
        if w.size != self.grid.n_nodes:
            raise DimensionMismatchError(
                f"field has {w.size} values, grid has {self.grid.n_nodes} nodes")
        if self.strategy == "dense":
            A = self.matrix(t)
            return A @ w - A.sum(axis=1) * w
        if self.strategy == "spectral":
            m = self.multipliers()
            wg = w.reshape(self.grid.shape)
            return np.fft.ifftn(np.fft.fftn(wg) * m).real.ravel()
        vals = self.offset_values(t)
        wg = w.reshape(self.grid.shape)
        acc = np.zeros_like(wg)
        axes = tuple(range(self.grid.dimension))
        for i, delta in enumerate(self.deltas):
            shifted = np.roll(wg, tuple(-delta), axis=axes)
            kd = vals[i] if vals.ndim == 1 else vals[i].reshape(self.grid.shape)
            acc += kd * (shifted - wg)
        return acc.ravel() * self.grid.spacing ** self.grid.dimension


def make_operator(grid: Grid, kernel: Kernel,
                  strategy: str = "banded") -> DiscreteOperator:
    return DiscreteOperator(grid, kernel, strategy)


def apply_operator(op: DiscreteOperator, w: Field, t: float = 0.0) -> Field:
    if not op.grid.compatible_with(w.grid):
        raise GridMismatchError("operator and field grids differ")
    out = Field(w.grid, op.apply(w.values, t))
    return out.require_finite("apply_operator output")


def bilinear_form(kernel_or_op, u: Field, v: Field, t: float = 0.0) -> float:
    """B[u, v] = sum_x sum_{y != x} K [u(x)-u(y)] [v(x)-v(y)] h^(2N).

    Accepts a kernel (a banded operator is built on the fields' grid) or a
    prebuilt banded/dense-compatible operator.  Satisfies
    <L u, v> h^N = -B[u, v] / 2 up to roundoff and B[u, u] >= 0.
    """
    if not u.grid.compatible_with(v.grid):
        raise GridMismatchError("bilinear_form fields live on different grids")
    if isinstance(kernel_or_op, DiscreteOperator):
        op = kernel_or_op
        if op.strategy == "spectral":
            raise StrategyMismatchError(
                "bilinear_form needs offset data; use banded or dense")
        if not op.grid.compatible_with(u.grid):
            raise GridMismatchError("operator and field grids differ")
    else:
        op = DiscreteOperator(u.grid, kernel_or_op, "banded")
    vals = op.offset_values(t)
    shape = u.grid.shape
    ug = u.values.reshape(shape)
    vg = v.values.reshape(shape)
    axes = tuple(range(u.grid.dimension))
    total = 0.0
    for i, delta in enumerate(op.deltas):
        du = ug - np.roll(ug, tuple(-delta), axis=axes)
        dv = vg - np.roll(vg, tuple(-delta), axis=axes)
        kd = vals[i] if vals.ndim == 1 else vals[i].reshape(shape)
        total += float(np.sum(kd * du * dv))
    return total * u.grid.spacing ** (2 * u.grid.dimension)


def sobolev_seminorm(u: Field, s: float, cutoff: float = 2.0) -> float:
    """Squared discrete H^(s/2) seminorm, pairs within `cutoff`:

        sum_x sum_{0 < |x-y| <= cutoff} [u(x)-u(y)]^2 / |x-y|^(N+s) h^(2N)

    Scales as c^2 under u -> c u.
    """
    if not (0.0 < s < 2.0):
        raise InvalidParameterError(f"order out of (0, 2): {s}")
    if not (cutoff > 0.0):
        raise InvalidParameterError(f"cutoff must be positive: {cutoff}")
    grid = u.grid
    deltas, dists = grid.offsets_within(cutoff)
    weights = dists ** (-(grid.dimension + s))
    ug = u.values.reshape(grid.shape)
    axes = tuple(range(grid.dimension))
    total = 0.0
    for delta, wgt in zip(deltas, weights):
        du = ug - np.roll(ug, tuple(-delta), axis=axes)
        total += wgt * float(np.sum(du * du))
    return total * grid.spacing ** (2 * grid.dimension)
