"""Generalized DDIM sampler, its stochastic relatives and reference integrators.

Everything runs on the forward clock: a state at time t = k*h is moved to
time (k-1)*h by one sampler step, from k = T/h down to k = 1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as _rng
from .errors import (ConfigError, DegenerateDiffusionError, DomainError,
                     FailureFractionError)
from .laws import IsotropicGaussian
from .process import TimeGrid

DIVERGENCE_THRESHOLD = 1e12
MAX_FAILURE_FRACTION = 0.01
INIT_MODES = ("exact_qT", "stationary")
LOOKBACK_MODES = ("shifted", "current")


def delta_ell(ell):
    """1 - sqrt(1 - 1/ell), written without cancellation."""
    return (1.0 / ell) / (1.0 + math.sqrt(1.0 - 1.0 / ell))


def xi_ell(ell):
    """delta_ell - 1/(2 ell), written without cancellation."""
    r = math.sqrt(1.0 - 1.0 / ell)
    return delta_ell(ell) / (2.0 * ell * (1.0 + r))


def lambda_coefficient(ell, lam):
    """ell * (1 - sqrt(1 - 1/ell) sqrt(1 - lam^2/(ell-1))); tends to (1 + lam^2)/2."""
    return ell * (1.0 - math.sqrt(1.0 - 1.0 / ell) * math.sqrt(1.0 - lam * lam / (ell - 1)))


@dataclass(frozen=True)
class SamplerConfig:
    T: float
    h: float
    ell: int
    lam: float = 0.0
    init_mode: str = "exact_qT"
    seed: int = 0
    record_trajectory: bool = False
    record_excess: bool = False
    record_steps: Optional[tuple] = None
    lookback: str = "shifted"

    def __post_init__(self):
        grid = TimeGrid(self.T, self.h)
        if int(self.ell) != self.ell or self.ell < 2:
            raise ConfigError(f"invariant ell >= 2 violated: ell={self.ell}")
        object.__setattr__(self, "ell", int(self.ell))
        if not self.ell * self.h < self.T:
            raise ConfigError(f"invariant ell*h < T violated: ell*h={self.ell * self.h}, T={self.T}")
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ConfigError(f"invariant lambda >= 0 violated: lambda={self.lam}")
        if self.lam > 0 and not self.lam ** 2 < self.ell - 1:
            raise ConfigError(f"invariant lambda^2 < ell - 1 violated: lambda={self.lam}, ell={self.ell}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.lookback not in LOOKBACK_MODES:
            raise ConfigError(f"lookback must be one of {LOOKBACK_MODES}, got {self.lookback!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.record_steps is not None:
            object.__setattr__(self, "record_steps", tuple(sorted({int(k) for k in self.record_steps})))
        object.__setattr__(self, "_K", grid.K)

    @property
    def K(self):
        return self._K

    @property
    def grid(self):
        return TimeGrid(self.T, self.h)


@dataclass
class ExcessDiagnostics:
    """Per-step mean squared norms of the three excess terms (NaN where k < ell)."""

    steps: np.ndarray
    mean_sq_v1: np.ndarray
    mean_sq_v2: np.ndarray
    mean_sq_v3: np.ndarray
    delta: float
    xi: float


@dataclass
class Ensemble:
    points: np.ndarray
    ids: Optional[np.ndarray] = None
    history: dict = field(default_factory=dict)
    excess: Optional[ExcessDiagnostics] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(-1, 1)
        if self.points.shape[0] < 1:
            raise DomainError("an ensemble needs at least one point")
        if self.ids is None:
            self.ids = np.arange(self.points.shape[0])

    @property
    def N(self):
        return self.points.shape[0]


# --- operators ----------------------------------------------------------------------


def _advance(p, s, dt, x):
    return x + dt * p.drift(s, x)


def restore(p, score, t, s, x):
    """Tweedie-style restoration from time t back to time s < t."""
    if not t >= s:
        raise DomainError(f"restore needs t >= s, got t={t}, s={s}")
    tau = t - s
    g = p.diffusion(t)
    return x - tau * p.drift(t, x) + tau * (g * g) * score(t, x)


def _degrade(p, s, dt, x, gamma):
    return _advance(p, s, dt, x) + (p.diffusion(s) * math.sqrt(dt)) * gamma


def degrade(p, s, t, x, gamma):
    """One Euler-Maruyama forward step from s to t driven by the supplied noise."""
    if not t >= s:
        raise DomainError(f"degrade needs t >= s, got s={s}, t={t}")
    return _degrade(p, s, t - s, x, gamma)


def simulated_noise(p, z, x_target, s, dt):
    """The noise that degrades z at time s over duration dt into x_target."""
    g = p.diffusion(s)
    if not g > 0.0:
        raise DegenerateDiffusionError(f"g({s}) = {g}; simulated noise divides by g")
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    return (x_target - _advance(p, s, dt, z)) / (g * math.sqrt(dt))


def pf_euler_step(p, score, t, h, x):
    """Euler step of the probability-flow ODE from time t to t - h."""
    g = p.diffusion(t)
    return x - h * (p.drift(t, x) - 0.5 * (g * g) * score(t, x))


def reverse_sde_em_step(p, score, lam, t, h, x, noise):
    """Euler-Maruyama step of the lambda-family reverse SDE from time t to t - h."""
    if lam == 0.0:
        return pf_euler_step(p, score, t, h, x)
    g = p.diffusion(t)
    drift = p.drift(t, x) - 0.5 * (1.0 + lam * lam) * (g * g) * score(t, x)
    return x - h * drift + (lam * g * math.sqrt(h)) * noise


def _check_step(cfg, k):
    if not 1 <= k <= cfg.K:
        raise DomainError(f"step index k={k} outside [1, {cfg.K}]")


def _lookback_step(p, score, cfg, k, x, nu):
    h, ell = cfg.h, cfg.ell
    t, s = k * h, (k - ell) * h
    z = restore(p, score, t, s, x)
    if cfg.lookback == "shifted":
        gamma = simulated_noise(p, z, x, s, ell * h)
    else:
        # drift and diffusion frozen at the current (time, state)
        fx, g = p.drift(t, x), p.diffusion(t)
        gamma = (x - (z + (ell * h) * fx)) / (g * math.sqrt(ell * h))
    if nu is not None and cfg.lam != 0.0:
        gamma = (math.sqrt(1.0 - cfg.lam ** 2 / (ell - 1)) * gamma
                 + (cfg.lam / math.sqrt(ell - 1)) * nu)
    if cfg.lookback == "shifted":
        return _degrade(p, s, (ell - 1) * h, z, gamma)
    return (z + ((ell - 1) * h) * fx) + (g * math.sqrt((ell - 1) * h)) * gamma


def ddim_step(p, score, cfg, k, x):
    """Deterministic generalized DDIM step from time k*h to (k-1)*h.

    For k >= ell: restore ell*h back, infer the simulated noise, and degrade the
    restored point forward to (k-1)*h with that noise. For k < ell the
    probability-flow Euler step is used.
    """
    _check_step(cfg, k)
    if k < cfg.ell:
        return pf_euler_step(p, score, k * cfg.h, cfg.h, x)
    return _lookback_step(p, score, cfg, k, x, None)


def lambda_step(p, score, cfg, k, x, nu):
    """lambda-family step: simulated noise mixed with fresh noise nu."""
    _check_step(cfg, k)
    if k < cfg.ell:
        raise DomainError("lambda_step needs k >= ell")
    return _lookback_step(p, score, cfg, k, x, nu)


def excess_terms(p, score, cfg, k, x):
    """(v1, v2, v3) such that ddim_step = pf_euler_step + v1 + v2 + v3."""
    _check_step(cfg, k)
    if k < cfg.ell:
        raise DomainError("excess terms are defined for k >= ell")
    h, ell = cfg.h, cfg.ell
    t, s = k * h, (k - ell) * h
    z = restore(p, score, t, s, x)
    fz, fx = p.drift(s, z), p.drift(t, x)
    g = p.diffusion(t)
    lxi = ell * xi_ell(ell)
    v1 = (lxi * h) * fz
    v2 = (0.5 * h) * (fx - fz)
    v3 = (h * lxi) * (-fx + (g * g) * score(t, x))
    return v1, v2, v3


def reference_solve(p, score, T, x0, t_end=0.0, n_steps=None):
    """Classical RK4 on the probability-flow ODE from forward time T down to t_end.

    The default step is at most 1e-4 * T.
    """
    x = np.array(x0, dtype=float)
    span = T - t_end
    if n_steps is None:
        n_steps = max(10000, int(math.ceil(span / (1e-4 * T))))
    hr = span / n_steps

    def vel(u, y):
        g = p.diffusion(u)
        return p.drift(u, y) - 0.5 * (g * g) * score(u, y)

    for i in range(n_steps):
        u = T - i * hr
        k1 = vel(u, x)
        k2 = vel(u - 0.5 * hr, x - 0.5 * hr * k1)
        k3 = vel(u - 0.5 * hr, x - 0.5 * hr * k2)
        k4 = vel(u - hr, x - hr * k3)
        x = x - (hr / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    bad = ~np.all(np.isfinite(x), axis=-1) | np.any(np.abs(x) > DIVERGENCE_THRESHOLD, axis=-1)
    if np.any(bad):
        raise FloatingPointError(f"{int(np.sum(bad))} reference trajectories diverged")
    return Ensemble(x)


# --- full sampler -------------------------------------------------------------------


def init_law(p, score, cfg):
    if cfg.init_mode == "exact_qT":
        return score.marginal(cfg.T)
    if p.kind not in ("OU_standard", "VP"):
        raise ConfigError(f"stationary init needs an OU_standard or VP process, got {p.kind!r}")
    return IsotropicGaussian(np.zeros(p.dim), 1.0)


def check_lookback_diffusion(p, cfg):
    """Reject runs whose lookback reaches a time with g = 0."""
    if cfg.K < cfg.ell:
        return
    times = [0.0, (cfg.K - cfg.ell) * cfg.h]
    if cfg.lookback == "current":
        times = [cfg.ell * cfg.h, cfg.T]
    for t in times:
        if not p.diffusion(t) > 0.0:
            raise ConfigError(f"g({t}) = 0 at a lookback time; the simulated noise is undefined")


def _run_block(p, score, cfg, law, b, n):
    x = law.sample(n, _rng.generator(cfg.seed, b, _rng.STREAM_INIT, 0)).reshape(n, p.dim)
    failed = np.zeros(n, dtype=bool)
    K, ell = cfg.K, cfg.ell
    sums = np.zeros((K + 1, 3))
    hist = {}
    want = None
    if cfg.record_trajectory:
        want = set(range(K + 1)) if cfg.record_steps is None else set(cfg.record_steps)
    if want is not None and K in want:
        hist[K] = x.copy()
    for k in range(K, 0, -1):
        t = k * cfg.h
        nu = None
        if cfg.lam > 0.0:
            nu = _rng.normal(cfg.seed, b, _rng.STREAM_NOISE, k, x.shape)
        with np.errstate(all="ignore"):
            if cfg.record_excess and k >= ell:
                v = excess_terms(p, score, cfg, k, x)
                for j in range(3):
                    sq = np.sum(v[j] * v[j], axis=1)
                    sums[k, j] = np.sum(np.where(failed, 0.0, sq))
            if k >= ell:
                x = ddim_step(p, score, cfg, k, x) if nu is None else lambda_step(p, score, cfg, k, x, nu)
            else:
                x = reverse_sde_em_step(p, score, cfg.lam, t, cfg.h, x, nu)
        bad = ~np.all(np.isfinite(x), axis=1) | np.any(np.abs(x) > DIVERGENCE_THRESHOLD, axis=1)
        if np.any(bad):
            failed |= bad
            x[failed] = 0.0
        if want is not None and (k - 1) in want:
            hist[k - 1] = x.copy()
    return x, failed, sums, hist


def run_sampler(p, score, cfg, N, threads=1):
    """Run N trajectories from q_T (or the stationary law) down to time 0.

    Returns (ensemble, excess diagnostics or None, failure count). Failed
    trajectories (non-finite, |x| > 1e12, or out of the score's support) are
    excluded from the ensemble; more than 1% failures raises
    FailureFractionError with the partial result attached.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    check_lookback_diffusion(p, cfg)
    law = init_law(p, score, cfg)
    blocks = _rng.block_slices(N)
    work = lambda b: _run_block(p, score, cfg, law, b, blocks[b].stop - blocks[b].start)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(len(blocks))))
    else:
        parts = [work(b) for b in range(len(blocks))]

    x = np.concatenate([q[0] for q in parts])
    failed = np.concatenate([q[1] for q in parts])
    keep = ~failed
    n_ok = int(keep.sum())
    excess = None
    if cfg.record_excess:
        sums = np.zeros((cfg.K + 1, 3))
        for q in parts:  # fixed block order
            sums += q[2]
        steps = np.arange(cfg.ell, cfg.K + 1)
        means = sums[steps] / max(n_ok, 1)
        excess = ExcessDiagnostics(steps, means[:, 0], means[:, 1], means[:, 2],
                                   delta_ell(cfg.ell), xi_ell(cfg.ell))
    history = {}
    if cfg.record_trajectory:
        for k in parts[0][3]:
            history[k] = np.concatenate([q[3][k] for q in parts])[keep]
    ids = np.flatnonzero(keep)
    n_failed = int(failed.sum())
    ens = Ensemble(x[keep] if n_ok else np.zeros((1, p.dim)), ids=ids, history=history, excess=excess)
    if n_failed > MAX_FAILURE_FRACTION * N:
        raise FailureFractionError(
            f"{n_failed} of {N} trajectories failed (> {MAX_FAILURE_FRACTION:.0%})",
            result=(ens, excess, n_failed))
    return ens, excess, n_failed


def _reverse_sde_block(p, score, cfg, law, b, n, record):
    x = law.sample(n, _rng.generator(cfg.seed, b, _rng.STREAM_INIT, 0)).reshape(n, p.dim)
    hist = {cfg.K: x.copy()} if cfg.K in record else {}
    for k in range(cfg.K, 0, -1):
        nu = _rng.normal(cfg.seed, b, _rng.STREAM_NOISE, k, x.shape) if cfg.lam > 0 else None
        with np.errstate(all="ignore"):
            x = reverse_sde_em_step(p, score, cfg.lam, k * cfg.h, cfg.h, x, nu)
        if (k - 1) in record:
            hist[k - 1] = x.copy()
    return x, hist


def run_reverse_sde(p, score, cfg, N, threads=1):
    """Euler-Maruyama on the lambda-family reverse SDE at every step (no lookback).

    ``cfg.ell`` is ignored. Returns an Ensemble whose history holds the states
    at ``cfg.record_steps`` (empty when recording is off).
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    law = init_law(p, score, cfg)
    record = set()
    if cfg.record_trajectory:
        record = set(range(cfg.K + 1)) if cfg.record_steps is None else set(cfg.record_steps)
    blocks = _rng.block_slices(N)
    work = lambda b: _reverse_sde_block(p, score, cfg, law, b, blocks[b].stop - blocks[b].start, record)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(len(blocks))))
    else:
        parts = [work(b) for b in range(len(blocks))]
    history = {k: np.concatenate([q[1][k] for q in parts]) for k in parts[0][1]}
    return Ensemble(np.concatenate([q[0] for q in parts]), history=history)
