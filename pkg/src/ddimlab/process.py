"""Forward diffusions dx = f_t(x) dt + g(t) dW and their closed-form marginals."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .errors import ConfigError, DomainError, UnsupportedProcessError
from .laws import GaussianMixture1D, IsotropicGaussian

KINDS = ("OU_standard", "VP", "VE", "NonlinearTest", "Custom")
LINEAR_KINDS = ("OU_standard", "VP", "VE")
SQRT2 = math.sqrt(2.0)
# half-width of the box |x_i| <= AUDIT_BOX on which declared constants must hold
AUDIT_BOX = 10.0


@dataclass(frozen=True)
class SmoothnessParams:
    """Declared smoothness constants of a forward process and its marginals."""

    L_f_t: float = 0.0
    L_f_x: float = 0.0
    L_g: float = 0.0
    R_drift: float = 0.0
    g_max: float = 0.0
    L_sc_star: float = 0.0
    beta: float = 0.0
    c_exp: float = 0.0
    L_high: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (value >= 0.0):
                raise DomainError(f"smoothness parameter {name} must be >= 0, got {value}")


@dataclass(frozen=True)
class TimeGrid:
    T: float
    h: float
    K: int = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.h > 0.0 and self.T > 0.0):
            raise ConfigError(f"need T > 0 and h > 0, got T={self.T}, h={self.h}")
        K = int(round(self.T / self.h))
        if K < 1 or abs(K * self.h - self.T) > 1e-12 * self.T:
            raise ConfigError(f"T={self.T!r} is not an integer multiple of h={self.h!r}")
        object.__setattr__(self, "K", K)

    def times(self):
        return np.arange(self.K + 1) * self.h


@dataclass(frozen=True)
class ForwardProcess:
    """A forward diffusion.

    ``drift(t, x)`` acts on arrays of shape (N, d); ``diffusion(t)`` is a scalar.
    Linear kinds carry ``mean_factor(t)`` and ``noise_var(t)`` so that
    x_t = mean_factor(t) x_0 + sqrt(noise_var(t)) * N(0, I).
    """

    drift: Callable
    diffusion: Callable
    dim: int
    smoothness: SmoothnessParams
    kind: str
    mean_factor: Optional[Callable] = None
    noise_var: Optional[Callable] = None
    drift_jacobian: Optional[Callable] = None
    params: tuple = ()
    autonomous: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown process kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError("dim must be a positive integer")

    @property
    def is_linear(self):
        return self.kind in LINEAR_KINDS


def ou_standard(dim=1):
    """Standard OU process: f(x) = -x, g = sqrt(2)."""
    return ForwardProcess(
        drift=lambda t, x: -np.asarray(x, dtype=float),
        diffusion=lambda t: SQRT2,
        dim=dim,
        smoothness=SmoothnessParams(L_f_t=0.0, L_f_x=1.0, L_g=0.0, R_drift=0.0, g_max=SQRT2),
        kind="OU_standard",
        mean_factor=lambda t: math.exp(-t),
        noise_var=lambda t: -math.expm1(-2.0 * t),
        drift_jacobian=lambda t, x: -np.ones_like(np.asarray(x, dtype=float)),
        autonomous=True,
    )


def vp(beta0=0.1, beta1=19.9, dim=1, T=1.0):
    """Variance-preserving process with beta(t) = beta0 + beta1 t."""
    if beta0 < 0 or beta1 < 0 or beta0 + beta1 <= 0:
        raise DomainError("VP schedule needs beta0, beta1 >= 0, not both zero")
    beta = lambda t: beta0 + beta1 * t
    B = lambda t: beta0 * t + 0.5 * beta1 * t * t
    bmax = beta0 + beta1 * T
    return ForwardProcess(
        drift=lambda t, x: -0.5 * beta(t) * np.asarray(x, dtype=float),
        diffusion=lambda t: math.sqrt(beta(t)),
        dim=dim,
        smoothness=SmoothnessParams(L_f_t=0.5 * beta1 * AUDIT_BOX, L_f_x=0.5 * bmax, L_g=beta1,
                                    g_max=math.sqrt(bmax)),
        kind="VP",
        mean_factor=lambda t: math.exp(-0.5 * B(t)),
        noise_var=lambda t: -math.expm1(-B(t)),
        drift_jacobian=lambda t, x: -0.5 * beta(t) * np.ones_like(np.asarray(x, dtype=float)),
        params=(("beta0", beta0), ("beta1", beta1)),
    )


def ve(rate=1.0, dim=1):
    """Variance-exploding process with sigma_t^2 = rate * t, so g = sqrt(rate) and f = 0."""
    if not rate > 0:
        raise DomainError("VE rate must be positive")
    g = math.sqrt(rate)
    return ForwardProcess(
        drift=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda t: g,
        dim=dim,
        smoothness=SmoothnessParams(g_max=g),
        kind="VE",
        mean_factor=lambda t: 1.0,
        noise_var=lambda t: rate * t,
        drift_jacobian=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)),
        params=(("rate", rate),),
        autonomous=True,
    )


def nonlinear_test():
    """1-D test process f(x) = -x - 0.5 sin(x), g = sqrt(2); no closed-form marginals."""
    return ForwardProcess(
        drift=lambda t, x: -np.asarray(x, dtype=float) - 0.5 * np.sin(x),
        diffusion=lambda t: SQRT2,
        dim=1,
        smoothness=SmoothnessParams(L_f_t=0.0, L_f_x=1.5, L_g=0.0, R_drift=0.0,
                                    g_max=SQRT2, L_high=0.5),
        kind="NonlinearTest",
        drift_jacobian=lambda t, x: -1.0 - 0.5 * np.cos(x),
        autonomous=True,
    )


def custom(drift, diffusion, dim, smoothness=None, drift_jacobian=None):
    return ForwardProcess(drift=drift, diffusion=diffusion, dim=dim,
                          smoothness=smoothness or SmoothnessParams(), kind="Custom",
                          drift_jacobian=drift_jacobian)


def drift_at(p, t, x):
    """f_t(x) with input validation."""
    x = np.asarray(x, dtype=float)
    if not (np.isfinite(t) and t >= 0.0):
        raise DomainError(f"time must be finite and nonnegative, got {t}")
    if not np.all(np.isfinite(x)):
        raise DomainError("drift queried at a non-finite point")
    return p.drift(t, x)


def _require_linear(p):
    if not p.is_linear:
        raise UnsupportedProcessError(f"no closed-form marginals for process kind {p.kind!r}")


def ou_marginal(q0, t, p=None):
    """Law of the standard OU process at time t started from an isotropic Gaussian."""
    if p is not None and p.kind != "OU_standard":
        raise UnsupportedProcessError("ou_marginal requires an OU_standard process")
    if t < 0:
        raise DomainError("time must be nonnegative")
    # v0 e^{-2t} + 1 - e^{-2t} written so that v0 = 1 is reproduced exactly
    return IsotropicGaussian(q0.mean * math.exp(-t),
                             q0.variance - (1.0 - q0.variance) * math.expm1(-2.0 * t))


def _propagate_var(p, v0, a, t):
    nv = p.noise_var(t)
    if p.kind == "VE":
        return v0 + nv
    # variance-preserving kinds have a^2 = 1 - nv
    return v0 + (1.0 - v0) * nv


def linear_marginal(q0, p, t):
    """Isotropic-Gaussian marginal of any linear process."""
    _require_linear(p)
    a = p.mean_factor(t)
    return IsotropicGaussian(q0.mean * a, _propagate_var(p, q0.variance, a, t))


def linear_marginal_gmm(q0, p, t):
    """Componentwise moment propagation of a 1-D Gaussian mixture."""
    _require_linear(p)
    a = p.mean_factor(t)
    return GaussianMixture1D(q0.weights, q0.means * a, _propagate_var(p, q0.variances, a, t))


def marginal(q0, p, t):
    if isinstance(q0, GaussianMixture1D):
        return linear_marginal_gmm(q0, p, t)
    if isinstance(q0, IsotropicGaussian):
        return linear_marginal(q0, p, t)
    raise UnsupportedProcessError(f"no closed-form propagation for {type(q0).__name__}")


def _em_block(p, x, grid, seed, block):
    h, sqh = grid.h, math.sqrt(grid.h)
    for k in range(grid.K):
        t = k * grid.h
        gamma = _rng.normal(seed, block, _rng.STREAM_FORWARD, k, x.shape)
        x = x + h * p.drift(t, x) + (p.diffusion(t) * sqh) * gamma
    return x


def simulate_forward_em(p, x0, grid, seed, threads=1):
    """Euler-Maruyama from time 0 to grid.T; returns the (N, d) terminal points.

    Noise is keyed by (seed, block, step) so the result does not depend on ``threads``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = x0.reshape(-1, p.dim)
    if not np.all(np.isfinite(x0)):
        raise DomainError("initial ensemble must be finite")
    blocks = _rng.block_slices(x0.shape[0])
    work = lambda b: _em_block(p, x0[blocks[b]].copy(), grid, seed, b)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(len(blocks))))
    else:
        parts = [work(b) for b in range(len(blocks))]
    return np.concatenate(parts, axis=0)
