"""Marginal laws with exact log-densities, scores and samplers.

Three variants are supported: an isotropic Gaussian in any dimension, a 1-D
Gaussian mixture and a 1-D density tabulated on a uniform grid.
"""

from __future__ import annotations

import csv
import math

import numpy as np
from scipy import integrate, special

from .errors import DomainError

LOG_2PI = math.log(2.0 * math.pi)


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    if x.shape[-1] != dim:
        raise DomainError(f"points have dimension {x.shape[-1]}, law has {dim}")
    return x


class IsotropicGaussian:
    """N(mean, variance * I)."""

    def __init__(self, mean, variance):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        self.variance = float(variance)
        if not (self.variance > 0.0 and np.isfinite(self.variance)):
            raise DomainError(f"variance must be positive and finite, got {variance}")
        if not np.all(np.isfinite(self.mean)):
            raise DomainError("mean must be finite")
        self.mean.setflags(write=False)

    @property
    def dim(self):
        return self.mean.size

    def logpdf(self, x):
        x = _as_points(x, self.dim)
        r2 = np.sum((x - self.mean) ** 2, axis=-1)
        return -0.5 * r2 / self.variance - 0.5 * self.dim * (LOG_2PI + math.log(self.variance))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        x = np.asarray(x, dtype=float)
        return -(x - self.mean) / self.variance

    def cdf(self, x):
        if self.dim != 1:
            raise DomainError("cdf is only defined in one dimension")
        z = (np.asarray(x, dtype=float) - self.mean[0]) / math.sqrt(self.variance)
        return special.ndtr(z)

    def sample(self, n, rng):
        return self.mean + math.sqrt(self.variance) * rng.standard_normal((n, self.dim))

    def __repr__(self):
        return f"IsotropicGaussian(mean={self.mean.tolist()}, variance={self.variance!r})"


class GaussianMixture1D:
    """Finite mixture of 1-D Gaussians."""

    dim = 1

    def __init__(self, weights, means, variances):
        w = np.asarray(weights, dtype=float).ravel()
        m = np.asarray(means, dtype=float).ravel()
        v = np.asarray(variances, dtype=float).ravel()
        if not (w.size == m.size == v.size) or w.size == 0:
            raise DomainError("weights, means and variances must have equal nonzero length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("mixture weights must be nonnegative and sum to 1")
        if np.any(~(v > 0)) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(m)):
            raise DomainError("mixture variances must be positive and parameters finite")
        self.weights, self.means, self.variances = w, m, v
        for a in (w, m, v):
            a.setflags(write=False)

    def _component_logpdf(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        return (-0.5 * (x - self.means) ** 2 / self.variances
                - 0.5 * (LOG_2PI + np.log(self.variances)) + np.log(self.weights))

    def logpdf(self, x):
        return special.logsumexp(self._component_logpdf(x), axis=1)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        xa = np.asarray(x, dtype=float)
        lc = self._component_logpdf(xa)
        resp = np.exp(lc - special.logsumexp(lc, axis=1, keepdims=True))
        comp = -(xa.reshape(-1, 1) - self.means) / self.variances
        return np.sum(resp * comp, axis=1).reshape(xa.shape)

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        z = (xa.reshape(-1, 1) - self.means) / np.sqrt(self.variances)
        return (special.ndtr(z) @ self.weights).reshape(xa.shape)

    def mean(self):
        return float(self.weights @ self.means)

    def var(self):
        mu = self.mean()
        return float(self.weights @ (self.variances + self.means ** 2) - mu * mu)

    def sample(self, n, rng):
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        z = rng.standard_normal(n)
        return (self.means[comp] + np.sqrt(self.variances[comp]) * z).reshape(n, 1)

    def __repr__(self):
        return (f"GaussianMixture1D(weights={self.weights.tolist()}, means={self.means.tolist()}, "
                f"variances={self.variances.tolist()})")


class GridDensity1D:
    """Density tabulated on a uniform grid of ``n_points`` nodes over [x_min, x_max]."""

    dim = 1
    MASS_TOL = 1e-6

    def __init__(self, x_min, x_max, values, check_mass=True):
        values = np.asarray(values, dtype=float).ravel()
        if not x_max > x_min:
            raise DomainError("grid needs x_max > x_min")
        if values.size < 3:
            raise DomainError("grid needs at least 3 points")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DomainError("grid density values must be finite and nonnegative")
        self.x_min, self.x_max = float(x_min), float(x_max)
        self.values = values
        self.values.setflags(write=False)
        if check_mass:
            mass = self.mass()
            if abs(mass - 1.0) > self.MASS_TOL:
                raise DomainError(f"grid density integrates to {mass!r}, expected 1")

    @classmethod
    def from_law(cls, law, x_min, x_max, n_points):
        """Tabulate a closed-form 1-D law and renormalize to unit trapezoid mass."""
        x = np.linspace(x_min, x_max, n_points)
        vals = np.exp(law.logpdf(x.reshape(-1, 1)))
        vals = vals / integrate.trapezoid(vals, x)
        return cls(x_min, x_max, vals)

    @property
    def n_points(self):
        return self.values.size

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_points - 1)

    def mass(self):
        return float(integrate.trapezoid(self.values, dx=self.dx))

    def same_grid(self, other):
        return (self.n_points == other.n_points and self.x_min == other.x_min
                and self.x_max == other.x_max)

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        return np.interp(xa.ravel(), self.x, self.values, left=0.0, right=0.0).reshape(
            xa.shape[:-1] if xa.ndim == 2 else xa.shape)

    def cdf(self, x):
        """CDF of the piecewise-linear density (exact per cell, consistent with quantile)."""
        p, dx = self.values, self.dx
        c = np.concatenate(([0.0], np.cumsum(0.5 * (p[:-1] + p[1:]) * dx)))
        xa = np.asarray(x, dtype=float)
        pos = (xa - self.x_min) / dx
        i = np.clip(np.floor(pos).astype(np.int64), 0, p.size - 2)
        s = np.clip(xa - (self.x_min + i * dx), 0.0, dx)
        a, b = p[i], p[i + 1]
        out = (c[i] + a * s + 0.5 * (b - a) / dx * s * s) / c[-1]
        return np.clip(np.where(pos < 0, 0.0, np.where(pos > p.size - 1, 1.0, out)), 0.0, 1.0)

    def moments(self):
        x = self.x
        m = integrate.trapezoid(x * self.values, dx=self.dx)
        v = integrate.trapezoid((x - m) ** 2 * self.values, dx=self.dx)
        return float(m), float(v)

    def quantile(self, u):
        """Inverse CDF with piecewise-linear density (exact inversion per cell)."""
        x, p, dx = self.x, self.values, self.dx
        cell = 0.5 * (p[:-1] + p[1:]) * dx
        c = np.concatenate(([0.0], np.cumsum(cell)))
        u = np.asarray(u, dtype=float) * c[-1]
        i = np.clip(np.searchsorted(c, u, side="right") - 1, 0, cell.size - 1)
        r = u - c[i]
        a, b = p[i], p[i + 1]
        slope = (b - a) / dx
        # solve a*s + slope*s^2/2 = r for s in [0, dx]
        disc = np.sqrt(np.maximum(a * a + 2.0 * slope * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.abs(slope) > 1e-300, 2.0 * r / (a + disc), r / np.where(a > 0, a, 1.0))
        return x[i] + np.clip(s, 0.0, dx)

    def sample(self, n, rng):
        return self.quantile(rng.random(n)).reshape(n, 1)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "density"])
            for xi, qi in zip(self.x, self.values):
                w.writerow([repr(float(xi)), repr(float(qi))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, comments="#", ndmin=2)
        x, q = data[:, 0], data[:, 1]
        if not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9, atol=0.0):
            raise DomainError("grid CSV must have uniformly spaced x")
        return cls(x[0], x[-1], q)

    def __repr__(self):
        return f"GridDensity1D(x_min={self.x_min!r}, x_max={self.x_max!r}, n_points={self.n_points})"
