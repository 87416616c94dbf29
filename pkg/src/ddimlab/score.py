"""Exact score fields: closed form for linear processes, Fokker-Planck grids otherwise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, linalg

from . import process as _process
from .errors import (BoundaryError, DomainError, OutOfSupportError, StabilityError,
                     UnsupportedProcessError)
from .laws import GaussianMixture1D, GridDensity1D, IsotropicGaussian

DENSITY_FLOOR = 1e-12
LEAKAGE_TOL = 1e-4
COURANT_MAX = 0.9


@dataclass(frozen=True)
class ScoreField:
    """grad log q_t as a function of (t, x) on the forward clock.

    ``marginal(t)`` returns the exact law q_t (used for initialization and
    metrics); ``lsc(t)`` returns the Lipschitz constant of the score at t.
    """

    evaluator: Callable
    provenance: str
    marginal: Callable
    lsc: Callable

    def __call__(self, t, x):
        return self.evaluator(t, x)


def analytic_score(law, x):
    if isinstance(law, GridDensity1D):
        raise TypeError("grid densities need score_from_grid")
    if not isinstance(law, (IsotropicGaussian, GaussianMixture1D)):
        raise TypeError(f"no analytic score for {type(law).__name__}")
    return law.score(x)


def _gmm_lsc(law):
    sd = np.sqrt(law.variances.max())
    x = np.linspace(law.means.min() - 8 * sd, law.means.max() + 8 * sd, 4001)
    s = law.score(x)
    return float(np.max(np.abs(np.diff(s) / np.diff(x))))


def analytic_score_field(p, q0):
    """Score of the closed-form marginals of a linear process started at q0."""
    if not p.is_linear:
        raise UnsupportedProcessError(f"no closed-form score for process kind {p.kind!r}")
    law_at = lambda t: _process.marginal(q0, p, t)

    def lsc(t):
        law = law_at(t)
        if isinstance(law, IsotropicGaussian):
            return 1.0 / law.variance
        return _gmm_lsc(law)

    return ScoreField(evaluator=lambda t, x: law_at(t).score(x), provenance="analytic",
                      marginal=law_at, lsc=lsc)


def default_bounds(law, half_width=12.0, n_sd=8.0):
    """[-12, 12] widened to cover mean +/- 8 sd of the law."""
    if isinstance(law, GridDensity1D):
        m, v = law.moments()
    elif isinstance(law, GaussianMixture1D):
        m, v = law.mean(), law.var()
    else:
        m, v = float(law.mean[0]), law.variance
    sd = math.sqrt(v)
    return min(-half_width, m - n_sd * sd), max(half_width, m + n_sd * sd)


# --- grid scores ------------------------------------------------------------------


def _log_or_nan(values):
    floor = DENSITY_FLOOR * values.max()
    with np.errstate(divide="ignore"):
        return np.where(values >= floor, np.log(values), np.nan), floor


def nodal_scores(dx, values):
    """Central differences of ln q at the nodes; NaN where a neighbour is below the floor."""
    logv, _ = _log_or_nan(values)
    s = np.full(values.size, np.nan)
    s[1:-1] = (logv[2:] - logv[:-2]) / (2.0 * dx)
    return s


def grid_score_values(x_min, dx, values, x, nodal=None):
    """Vectorized score (ln q(x+dx) - ln q(x-dx)) / (2 dx) with ln q linearly interpolated.

    For linear interpolation this equals the linear interpolant of the nodal
    central differences. Queries outside [x_min + 2dx, x_max - 2dx] or touching
    nodes below the density floor give NaN.
    """
    n = values.size
    if nodal is None:
        nodal = nodal_scores(dx, values)
    xa = np.asarray(x, dtype=float)
    xr = xa.ravel()
    u = (xr - x_min) / dx
    s = np.interp(u, np.arange(n, dtype=float), nodal)
    inside = (u >= 2.0) & (u <= n - 3.0)
    s = np.where(inside, s, np.nan)
    return s.reshape(xa.shape)


def score_from_grid(q, x):
    """Score of a grid density at a scalar x; raises when out of support."""
    x = float(x)
    lo, hi = q.x_min + 2 * q.dx, q.x_max - 2 * q.dx
    if not lo <= x <= hi:
        raise OutOfSupportError(f"x={x} outside [{lo}, {hi}]")
    s = grid_score_values(q.x_min, q.dx, q.values, np.array([x]))[0]
    if not np.isfinite(s):
        raise OutOfSupportError(f"density at x={x} is below the floor")
    return float(s)


# --- Fokker-Planck solver -----------------------------------------------------------


@dataclass
class FPSolution:
    x_min: float
    x_max: float
    times: np.ndarray
    values: np.ndarray  # (n_times, n_points), each row at unit trapezoid mass
    leakage: np.ndarray  # mass lost through the boundary up to each time
    substeps: int

    @property
    def n_points(self):
        return self.values.shape[1]

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def density(self, i):
        return GridDensity1D(self.x_min, self.x_max, self.values[i])

    def __len__(self):
        return self.times.size

    def __getitem__(self, i):
        return self.density(i)

    def index_of(self, t, tol=1e-9):
        h = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        i = int(round((t - self.times[0]) / h))
        if 0 <= i < self.times.size and abs(self.times[i] - t) <= tol * max(h, abs(t)):
            return i
        return None


def _bernoulli(z):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = z / np.expm1(z)
    small = np.abs(z) < 1e-8
    out = np.where(small, 1.0 - 0.5 * z, out)
    return np.where(np.isfinite(out), out, 0.0)


def _generator_bands(p, t, faces, dx):
    """Tridiagonal generator of the exponentially fitted flux discretization."""
    f = np.asarray(p.drift(t, faces.reshape(-1, 1)), dtype=float).ravel()
    D = 0.5 * p.diffusion(t) ** 2
    if D > 0.0:
        pe = f * dx / D
        a = (D / dx) * _bernoulli(-pe)
        b = (D / dx) * _bernoulli(pe)
    else:
        a, b = np.maximum(f, 0.0), np.maximum(-f, 0.0)
    # face j sits between nodes j-1 and j; there are n+1 faces
    diag = -(a[1:] + b[:-1]) / dx
    upper = b[1:-1] / dx
    lower = a[1:-1] / dx
    return diag, upper, lower, f


def _step(q, bands, dt, theta):
    diag, upper, lower = bands
    n = q.size
    ab = np.zeros((3, n))
    ab[0, 1:] = -theta * dt * upper
    ab[1, :] = 1.0 - theta * dt * diag
    ab[2, :-1] = -theta * dt * lower
    rhs = q.copy()
    if theta < 1.0:
        c = (1.0 - theta) * dt
        rhs += c * diag * q
        rhs[:-1] += c * upper * q[1:]
        rhs[1:] += c * lower * q[:-1]
    return linalg.solve_banded((1, 1), ab, rhs, check_finite=False)


def fp_evolve_1d(p, q0, grid, n_points=None, substeps=None, rannacher=True):
    """Evolve a 1-D density under the forward Fokker-Planck equation.

    Crank-Nicolson in time with an exponentially fitted (Scharfetter-Gummel)
    flux, which reduces to first-order upwinding where advection dominates and
    to central diffusion where it does not. Absorbing boundaries; the lost mass
    is reported and every stored density is renormalized to unit mass.
    Returns an FPSolution with densities at every grid time k*h.
    """
    if p.dim != 1:
        raise UnsupportedProcessError("grid solver is 1-D only")
    if n_points is not None and n_points != q0.n_points:
        x_new = np.linspace(q0.x_min, q0.x_max, n_points)
        vals = np.interp(x_new, q0.x, q0.values)
        q0 = GridDensity1D(q0.x_min, q0.x_max, vals / integrate.trapezoid(vals, x_new))
    x, dx = q0.x, q0.dx
    faces = np.concatenate(([x[0] - 0.5 * dx], x + 0.5 * dx))
    h = grid.h

    fmax = 0.0
    for t in (0.0, 0.5 * grid.T, grid.T):
        fmax = max(fmax, float(np.max(np.abs(p.drift(t, faces.reshape(-1, 1))))))
    needed = max(1, math.ceil(fmax * h / (COURANT_MAX * dx) - 1e-12))
    if substeps is None:
        substeps = needed
    elif fmax * (h / substeps) / dx > COURANT_MAX:
        raise StabilityError(
            f"advection Courant number {fmax * h / substeps / dx:.3g} exceeds {COURANT_MAX}; "
            f"use at least {needed} substeps or a coarser grid")
    dt = h / substeps

    out = np.empty((grid.K + 1, x.size))
    leak = np.empty(grid.K + 1)
    q = q0.values.copy()
    out[0], leak[0] = q, 0.0
    fixed = _generator_bands(p, 0.0, faces, dx)[:3] if p.autonomous else None
    bands = lambda t: fixed if fixed is not None else _generator_bands(p, t, faces, dx)[:3]

    first = rannacher
    for k in range(grid.K):
        for j in range(substeps):
            t0 = k * h + j * dt
            if first:
                # two implicit half steps damp the non-smooth start
                q = _step(q, bands(t0 + 0.25 * dt), 0.5 * dt, 1.0)
                q = _step(q, bands(t0 + 0.75 * dt), 0.5 * dt, 1.0)
                first = False
            else:
                q = _step(q, bands(t0 + 0.5 * dt), dt, 0.5)
        q = np.maximum(q, 0.0)
        mass = integrate.trapezoid(q, dx=dx)
        lost = 1.0 - mass
        if lost > LEAKAGE_TOL:
            raise BoundaryError(
                f"{lost:.3g} of the mass left [{q0.x_min}, {q0.x_max}] by t={(k + 1) * h:.6g}; "
                "widen the grid")
        out[k + 1], leak[k + 1] = q / mass, lost
    return FPSolution(q0.x_min, q0.x_max, grid.times(), out, leak, substeps)


def grid_score_field(solution):
    """Score field backed by a Fokker-Planck solution (1-D).

    Times that fall between stored grid times are linearly interpolated.
    """
    x_min, dx, vals, times = solution.x_min, solution.dx, solution.values, solution.times

    def at_index(i, x):
        return grid_score_values(x_min, dx, vals[i], x)

    def evaluator(t, x):
        i = solution.index_of(t)
        if i is not None:
            return at_index(i, x)
        if not times[0] <= t <= times[-1]:
            raise DomainError(f"time {t} outside the solved range")
        j = int(np.searchsorted(times, t)) - 1
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1 - w) * at_index(j, x) + w * at_index(j + 1, x)

    def marginal(t):
        i = solution.index_of(t)
        if i is None:
            raise DomainError(f"time {t} is not a stored grid time")
        return solution.density(i)

    def lsc(t):
        i = solution.index_of(t)
        if i is None:
            i = int(np.argmin(np.abs(times - t)))
        v = vals[i]
        mask = v >= 1e-8 * v.max()
        s = grid_score_values(x_min, dx, v, solution.x)
        ds = np.abs(np.diff(s)) / dx
        ok = mask[:-1] & mask[1:] & np.isfinite(ds)
        return float(np.max(ds[ok]))

    return ScoreField(evaluator=evaluator, provenance="grid", marginal=marginal, lsc=lsc)
