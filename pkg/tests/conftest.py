"""Shared fixtures and builders for the test suite.

Ensemble trajectories are deterministic in their seed, so they are cached
for the whole session -- the detector, recurrence, and acceptance tests all
probe the same runs and re-integrating them per test would dominate runtime.
"""

import functools

import numpy as np
import pytest

from nlflow.calibrate import default_calibration
from nlflow.degiorgi import BarrierFamily, barrier_on_grid
from nlflow.ensembles import (
    default_grid,
    lemma_ensemble_run,
    level_ensemble_run,
    linear_dissipation_run,
    nonlinear_dissipation_run,
    oscillation_run,
    random_field_trajectory,
    recurrence_run,
)
from nlflow.flow import Trajectory
from nlflow.grid import Grid

cached_lemma_run = functools.lru_cache(maxsize=None)(lemma_ensemble_run)
cached_level_run = functools.lru_cache(maxsize=None)(level_ensemble_run)
cached_recurrence_run = functools.lru_cache(maxsize=None)(recurrence_run)
cached_oscillation_run = functools.lru_cache(maxsize=None)(oscillation_run)
cached_linear_dissipation = \
    functools.lru_cache(maxsize=None)(linear_dissipation_run)
cached_nonlinear_dissipation = \
    functools.lru_cache(maxsize=None)(nonlinear_dissipation_run)
cached_random_trajectory = \
    functools.lru_cache(maxsize=None)(random_field_trajectory)


@pytest.fixture(scope="session")
def calibration():
    return default_calibration()


@pytest.fixture(scope="session")
def grid1():
    return default_grid(1)


@pytest.fixture(scope="session")
def grid2():
    return default_grid(2)


def constant_trajectory(grid: Grid, value: float, t_lo: float = -3.0,
                        t_hi: float = 0.0, n: int = 25,
                        order: float = 1.0) -> Trajectory:
    """A w == const fake trajectory covering [t_lo, t_hi]."""
    times = np.linspace(t_lo, t_hi, n)
    fields = np.full((n, grid.n_nodes), float(value))
    return Trajectory.from_fields(grid, times, fields, order=order)


def synthetic_trajectory(grid: Grid, times, fields,
                         order: float = 1.0) -> Trajectory:
    return Trajectory.from_fields(grid, times, np.asarray(fields),
                                  order=order)


# --------------------------------------------------------------------------
# injected counterexample fields (detector soundness probes)

def lemma1_counterexample(grid: Grid, order: float = 1.0) -> Trajectory:
    """Tiny truncated mass but a sup breach late: a sparse spike at 0.8.

    The origin node sits where psi vanishes, so 0.8 > 1/2 + psi there; its
    truncated-energy contribution is (0.8)^2 * h * 2 ~ 0.08, far below any
    eps0 budget, so the hypothesis holds and the conclusion must be flagged.
    """
    times = np.linspace(-2.0, 0.0, 21)
    fields = np.zeros((times.size, grid.n_nodes))
    fields[:, 0] = 0.8
    return Trajectory.from_fields(grid, times, fields, order=order)


def corollary2_counterexample(grid: Grid, order: float = 1.0) -> Trajectory:
    """Mostly <= 0 on [-2,-1] (tiny positivity measure) yet w > 1/2 late."""
    times = np.linspace(-2.0, 0.0, 21)
    fields = np.full((times.size, grid.n_nodes), -0.5)
    late = np.where(times > -1.0 + 1e-12)[0]
    fields[np.ix_(late, grid.ball(0.3))] = 0.9
    return Trajectory.from_fields(grid, times, fields, order=order)


def lemma2_counterexample(grid: Grid, lam: float,
                          order: float = 1.0) -> Trajectory:
    """Below phi0 early (hypothesis holds), hugging 1 + psi_lambda late.

    The late block makes |{w > phi2}| large while the intermediate set stays
    empty, so both conclusion branches break at once.
    """
    psi_lam = barrier_on_grid(
        BarrierFamily("psi_lambda", order=order, lam=lam), grid)
    times = np.linspace(-3.0, 0.0, 31)
    fields = np.empty((times.size, grid.n_nodes))
    early = times <= -2.0 + 1e-12
    fields[early] = -0.5
    fields[~early] = 1.0 + psi_lam[None, :]
    return Trajectory.from_fields(grid, times, fields, order=order)


def lemma3_counterexample(grid: Grid, eps: float, lam: float,
                          order: float = 1.0) -> Trajectory:
    """Alternating +-(1 + psi_{eps,lam}): inside the envelope, osc = 2."""
    env = 1.0 + barrier_on_grid(
        BarrierFamily("psi_eps_lambda", order=order, lam=lam, eps=eps), grid)
    times = np.linspace(-3.0, 0.0, 31)
    signs = np.where(np.arange(times.size) % 2 == 0, 1.0, -1.0)
    fields = signs[:, None] * env[None, :]
    return Trajectory.from_fields(grid, times, fields, order=order)


def corollary1_counterexample(grid: Grid, order: float = 1.0) -> Trajectory:
    """Small initial mass, then a late sup far above the decay bound."""
    times = np.linspace(0.0, 1.0, 21)
    fields = np.zeros((times.size, grid.n_nodes))
    fields[0, grid.n_nodes // 2] = 0.01
    fields[times >= 0.5 - 1e-12] = 5.0
    return Trajectory.from_fields(grid, times, fields, order=order)
