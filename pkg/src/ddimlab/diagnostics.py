"""Divergences, smoothness constants and numeric checks of the interpolation argument.

Conventions: ``t`` is forward time and ``tau = T - t`` is reverse time. The
exact reverse velocity is mu_t(y) = -f_t(y) + g(t)^2/2 * score_t(y) and the
discrete one on [(k-1)h, kh] is mu'_k(y) = (step_k(y) - y) / h.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, stats

from . import samplers as _s
from .errors import ConfigError, DomainError
from .laws import GridDensity1D, IsotropicGaussian
from .process import AUDIT_BOX
from .score import DENSITY_FLOOR, default_bounds

# --- divergences --------------------------------------------------------------------


def kl_gaussian(a, b):
    if not (a.variance > 0 and b.variance > 0):
        raise DomainError("variances must be positive")
    d = a.dim
    r = a.variance / b.variance
    mean_term = float(np.sum((a.mean - b.mean) ** 2)) / (2.0 * b.variance)
    return 0.5 * d * (math.log(1.0 / r) + r - 1.0) + mean_term


def _require_same_grid(p, q):
    if not p.same_grid(q):
        raise DomainError("densities live on different grids")


def _floored_log(v):
    return np.log(np.maximum(v, DENSITY_FLOOR * v.max()))


def kl_grid(p, q):
    _require_same_grid(p, q)
    pv = p.values
    integrand = np.where(pv > 0, pv * (_floored_log(pv) - _floored_log(q.values)), 0.0)
    return float(integrate.trapezoid(integrand, dx=p.dx))


def tv_grid(p, q):
    _require_same_grid(p, q)
    return float(0.5 * integrate.trapezoid(np.abs(p.values - q.values), dx=p.dx))


def _as_grid(law, n_points=16385):
    if isinstance(law, GridDensity1D):
        return law
    lo, hi = default_bounds(law, half_width=0.0, n_sd=12.0)
    return GridDensity1D.from_law(law, lo, hi, n_points)


def tv_hist_vs_grid(samples, q, bins=None):
    """Histogram TV against a 1-D law using bins of equal q-mass.

    ``q`` may be a grid density or a closed-form 1-D law. Default bin count is
    ceil(N^(1/3)).
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise DomainError("no samples")
    if bins is None:
        bins = int(math.ceil(n ** (1.0 / 3.0) - 1e-9))
    grid = _as_grid(q)
    inner = grid.quantile(np.arange(1, bins) / bins)
    counts = np.bincount(np.searchsorted(inner, x, side="right"), minlength=bins)
    return float(0.5 * np.sum(np.abs(counts / n - 1.0 / bins)))


def fisher_info_grid(p, q):
    """Relative Fisher information int p (d/dx ln(p/q))^2 on a shared grid."""
    _require_same_grid(p, q)
    pv, qv = p.values, q.values
    ok = (pv >= DENSITY_FLOOR * pv.max()) & (qv >= DENSITY_FLOOR * qv.max())
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(ok, np.log(np.where(ok, pv, 1.0)) - np.log(np.where(ok, qv, 1.0)), 0.0)
    dr = np.gradient(r, p.dx)
    usable = ok.copy()
    usable[1:-1] &= ok[:-2] & ok[2:]
    return float(integrate.trapezoid(np.where(usable, pv * dr * dr, 0.0), dx=p.dx))


# --- fits and reports ---------------------------------------------------------------


def fit_loglog_slope(x, y, confidence=0.95):
    """Least-squares slope of log y against log x with a t-based half-width."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    res = stats.linregress(lx, ly)
    dof = lx.size - 2
    half = float(stats.t.ppf(0.5 + confidence / 2.0, dof) * res.stderr) if dof > 0 else float("nan")
    return float(res.slope), half, float(res.intercept)


ROW_FIELDS = ("h", "ell", "lam", "N", "kl", "tv", "failure_fraction", "runtime_seconds")


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)  # axis -> (metric, slope, half_width)
    metadata: dict = field(default_factory=dict)

    def add_row(self, **row):
        for key in ("kl", "tv"):
            v = row.get(key)
            if v is not None and not math.isnan(v):
                if key == "kl" and v < -1e-8:
                    raise DomainError(f"negative KL {v}")
                if key == "tv" and not -1e-12 <= v <= 1.0 + 1e-12:
                    raise DomainError(f"TV outside [0, 1]: {v}")
        self.rows.append({k: row.get(k, float("nan")) for k in ROW_FIELDS})

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def fit(self, axis, metric, x=None):
        xs = self.column(axis) if x is None else np.asarray(x, dtype=float)
        ys = self.column(metric)
        slope, half, _ = fit_loglog_slope(xs, ys)
        self.slopes[axis] = (metric, slope, half)
        return slope, half


@dataclass
class InterpolationCheck:
    """Time series from the grid-based interpolation checks (reverse times ``tau``)."""

    tau: np.ndarray
    kl: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    fisher: np.ndarray
    gap: np.ndarray
    n_points: int
    delta: float

    @property
    def residual(self):
        return np.abs(self.lhs - self.rhs)

    @property
    def max_residual(self):
        return float(np.max(self.residual))

    @property
    def cauchy_schwarz_bound(self):
        return np.sqrt(self.fisher * self.gap)

    @property
    def cauchy_schwarz_holds(self):
        return bool(np.all(self.lhs <= self.cauchy_schwarz_bound * (1 + 1e-9) + 1e-14))


# --- smoothness constants -----------------------------------------------------------


@dataclass
class LipschitzReport:
    tau: np.ndarray  # reverse times of the table
    L_sc: np.ndarray
    L_t: np.ndarray
    Lp_t: np.ndarray  # L_t frozen at the left grid time floor(tau/h) h
    Lambda: float
    Lambda_prime: float
    Lambda_score: float  # exp(int L_sc)
    Lambda_prime_score: float  # exp(int L_sc at floor(tau/h) h)
    L_high_M: float


def lipschitz_constants(p, score, T, h, n_quad=4096):
    """Tables of L_sc, L_t = L_f;x + g_max^2 L_sc and the exponential constants

    Lambda  = exp(int_0^T (L_f;x^2 + g_max^2 L_sc(tau)) dtau)
    Lambda' = same integrand with L_sc frozen at floor(tau/h) h.
    The score-only versions drop the L_f;x and g_max factors.
    """
    sm = p.smoothness
    K = int(round(T / h))
    lsc_rev = lambda tau: score.lsc(T - tau)
    tau_q = np.linspace(0.0, T, n_quad + 1)
    lsc_q = np.array([lsc_rev(u) for u in tau_q])
    tau_k = np.arange(K) * h
    lsc_k = np.array([lsc_rev(u) for u in tau_k])
    g2 = sm.g_max ** 2
    lf2 = sm.L_f_x ** 2
    Lam = math.exp(integrate.trapezoid(lf2 + g2 * lsc_q, tau_q))
    Lam_p = math.exp(h * np.sum(lf2 + g2 * lsc_k))
    Lam_s = math.exp(integrate.trapezoid(lsc_q, tau_q))
    Lam_ps = math.exp(h * np.sum(lsc_k))
    L_t = np.maximum(1.0, sm.L_f_x + g2 * lsc_q)
    idx = np.minimum((tau_q / h).astype(int), K - 1)
    Lp_t = np.maximum(1.0, sm.L_f_x + g2 * lsc_k[idx])
    M = max(1.0, (1.0 + 0.5 * g2) * sm.L_high)
    return LipschitzReport(tau_q, lsc_q, L_t, Lp_t, Lam, Lam_p, Lam_s, Lam_ps, M)


# keep the name used in the module map
lambda_constants = lipschitz_constants


@dataclass
class AuditReport:
    declared: dict
    empirical: dict
    passed: bool
    failures: list
    beta_c_estimate: tuple = (float("nan"), float("nan"))


def audit_smoothness(p, T, n_pairs=10000, seed=0, box=AUDIT_BOX, score=None):
    """Compare declared SmoothnessParams with sampled Lipschitz quotients in |x_i| <= box."""
    rng = np.random.default_rng(seed)
    d = p.dim
    x = rng.uniform(-box, box, (n_pairs, d))
    y = rng.uniform(-box, box, (n_pairs, d))
    t = rng.uniform(0.0, T, n_pairs)
    s = rng.uniform(0.0, T, n_pairs)
    fx = np.stack([p.drift(ti, xi[None])[0] for ti, xi in zip(t, x)])
    fy = np.stack([p.drift(ti, yi[None])[0] for ti, yi in zip(t, y)])
    fs = np.stack([p.drift(si, xi[None])[0] for si, xi in zip(s, x)])
    gt = np.array([p.diffusion(ti) for ti in t])
    gs = np.array([p.diffusion(si) for si in s])
    f0 = np.stack([p.drift(ti, np.zeros((1, d)))[0] for ti in t])
    nx = np.linalg.norm(x - y, axis=1)
    dt = np.abs(t - s)
    emp = {
        "L_f_x": float(np.max(np.linalg.norm(fx - fy, axis=1) / nx)),
        "L_f_t": float(np.max(np.linalg.norm(fx - fs, axis=1) / dt)),
        "L_g": float(np.max(np.abs(gt ** 2 - gs ** 2) / dt)),
        "R_drift": float(np.max(np.linalg.norm(f0, axis=1))),
        "g_max": float(max(gt.max(), gs.max())),
    }
    if p.drift_jacobian is not None and d == 1:
        jx = p.drift_jacobian(t[:, None], x)
        jy = p.drift_jacobian(t[:, None], y)
        emp["L_high"] = float(np.max(np.abs(jx - jy).ravel() / nx))
    declared = {k: getattr(p.smoothness, k) for k in emp}
    failures = [k for k in emp if emp[k] > declared[k] * (1 + 1e-9) + 1e-12]
    bc = (float("nan"), float("nan"))
    if score is not None and d == 1:
        bc = estimate_score_time_holder(score, T, seed=seed)
    return AuditReport(declared, emp, not failures, failures, bc)


def estimate_score_time_holder(score, T, n=64, seed=0):
    """Empirical (beta, c) in |s_t(x) - s_u(x)| <= beta |t-u|^c (1 + |x| + |s_t(x)|).

    Reported for information only; the exponent is a log-log fit over time gaps.
    """
    rng = np.random.default_rng(seed)
    law = score.marginal(T / 2)
    xs = law.sample(n, rng)
    gaps = T / 4 * 0.5 ** np.arange(6)
    worst = []
    for gap in gaps:
        a = score(T / 2, xs)
        b = score(T / 2 + gap, xs)
        denom = 1.0 + np.abs(xs) + np.abs(a)
        worst.append(float(np.max(np.abs(a - b) / denom)))
    c, _, logb = fit_loglog_slope(gaps, worst)
    return float(math.exp(logb)), float(c)


# --- flow-map checks ---------------------------------------------------------------


@dataclass
class BiLipschitzReport:
    violations: int
    min_ratio: float
    max_ratio: float
    n_pairs: int


def bilipschitz_check(mu_prime, h, z, z_prime, offsets=None):
    """Check 1/2 <= |F(z)-F(z')| / |z-z'| <= 3/2 for F(z) = z + s mu'(z), s in [0, h].

    ``offsets`` are the values of s per pair; the default uses s = h.
    """
    z = np.asarray(z, dtype=float)
    zp = np.asarray(z_prime, dtype=float)
    off = np.full(z.shape[0], h) if offsets is None else np.asarray(offsets, dtype=float)
    Fz = z + off[:, None] * mu_prime(z)
    Fzp = zp + off[:, None] * mu_prime(zp)
    den = np.linalg.norm(z - zp, axis=1)
    keep = den > 0
    ratio = np.linalg.norm(Fz - Fzp, axis=1)[keep] / den[keep]
    bad = (ratio < 0.5) | (ratio > 1.5)
    return BiLipschitzReport(int(bad.sum()), float(ratio.min()), float(ratio.max()), int(keep.sum()))


def discrete_drift(p, score, cfg, k):
    """mu'_k as a callable: (step_k(y) - y) / h for the deterministic sampler."""
    def mu(y):
        return (_s.ddim_step(p, score, cfg, k, y) - y) / cfg.h
    return mu


def exact_velocity(p, score, t, y):
    g = p.diffusion(t)
    return -p.drift(t, y) + 0.5 * (g * g) * score(t, y)


def discrete_lipschitz(p, score, cfg, n_pairs=10000, seed=0, steps=None):
    """Sampled Lipschitz quotients of mu'_k over q_{kh}-distributed pairs; max over k."""
    rng = np.random.default_rng(seed)
    if steps is None:
        steps = np.unique(np.linspace(1, cfg.K, min(cfg.K, 64)).astype(int))
    best = 0.0
    for k in steps:
        law = score.marginal(k * cfg.h)
        a, b = law.sample(n_pairs, rng), law.sample(n_pairs, rng)
        mu = discrete_drift(p, score, cfg, int(k))
        q = np.linalg.norm(mu(a) - mu(b), axis=1) / np.linalg.norm(a - b, axis=1)
        best = max(best, float(np.max(q)))
    return max(1.0, best)


# --- grid push-forward of the interpolated process ----------------------------------


class _PushForward:
    """Log density of pi'_t on a fixed 1-D grid, transported step by step."""

    def __init__(self, p, score, cfg, lo, hi, n_points):
        self.p, self.score, self.cfg = p, score, cfg
        self.x = np.linspace(lo, hi, n_points)
        self.dx = self.x[1] - self.x[0]
        law = score.marginal(cfg.T)
        self.logd = {cfg.K: np.asarray(law.logpdf(self.x.reshape(-1, 1)), dtype=float)}

    def _map(self, k, off):
        y = self.x.reshape(-1, 1)
        mu = discrete_drift(self.p, self.score, self.cfg, k)
        m = mu(y).ravel()
        eps = 1e-5 * (1.0 + np.abs(self.x))
        dm = (mu(y + eps[:, None]).ravel() - mu(y - eps[:, None]).ravel()) / (2 * eps)
        return self.x + off * m, 1.0 + off * dm, m

    def log_density(self, k, off):
        """ln pi' at reverse offset ``off`` in [0, h] past the grid time k*h."""
        if k not in self.logd:
            raise DomainError("step densities must be built in order")
        F, dF, m = self._map(k, off)
        if np.any(dF <= 0) or np.any(np.diff(F) <= 0):
            raise DomainError("flow map is not invertible on the grid; reduce h")
        vals = self.logd[k] - np.log(dF)
        spline = interpolate.CubicSpline(F, vals, extrapolate=False)
        out = spline(self.x)
        fin = np.isfinite(out)
        if not fin.all():
            # outside the image of the grid: flat extension of the (negligible) edge values
            out = np.interp(self.x, self.x[fin], out[fin])
        inv = interpolate.CubicSpline(F, self.x, extrapolate=False)(self.x)
        mu_hat = interpolate.CubicSpline(F, m, extrapolate=True)(self.x)
        return out, mu_hat, inv

    def advance(self, k):
        self.logd[k - 1] = self.log_density(k, self.cfg.h)[0]


def _require_small_step(p, score, cfg):
    """The reduced conditional drift is only valid for h <= 1/(2 L'); returns L'."""
    Lp = discrete_lipschitz(p, score, cfg, n_pairs=2000)
    if cfg.h > 0.5 / Lp:
        raise DomainError(f"interpolation checks need h <= 1/(2L') = {0.5 / Lp:.4g}, got h={cfg.h}")
    return Lp


def _grid_terms(x, dx, logd, log_pi, mu_hat, mu):
    dens = np.exp(np.where(np.isfinite(logd), logd, -np.inf))
    floor = DENSITY_FLOOR * dens.max()
    ok = np.isfinite(logd) & (dens >= floor) & np.isfinite(mu_hat)
    lr = np.where(ok, logd - log_pi, 0.0)
    grad = np.gradient(lr, dx)
    use = ok.copy()
    use[1:-1] &= ok[:-2] & ok[2:]
    use[[0, -1]] = False
    w = np.where(use, dens, 0.0)
    dmu = np.where(use, mu_hat - mu, 0.0)
    kl = integrate.trapezoid(np.where(ok, dens * lr, 0.0), dx=dx)
    rhs = integrate.trapezoid(w * grad * dmu, dx=dx)
    fisher = integrate.trapezoid(w * grad * grad, dx=dx)
    gap = integrate.trapezoid(w * dmu * dmu, dx=dx)
    return kl, rhs, fisher, gap


def _default_bounds(score, T, n_sd=10.0):
    sds = []
    for t in (0.0, T / 2, T):
        law = score.marginal(t)
        lo, hi = default_bounds(law, half_width=0.0, n_sd=n_sd)
        sds.append((lo, hi))
    return min(a for a, _ in sds), max(b for _, b in sds)


def kl_derivative_check(p, score, cfg, taus=None, n_points=1024, delta=None, bounds=None):
    """Compare the finite-difference d/dtau KL(pi'||pi) with the integral identity.

    pi' is transported on a grid through the invertible per-step maps; pi is the
    exact reverse marginal, so the score field must provide closed-form laws at
    arbitrary times. ``taus`` default to 8 mid-interval reverse times.
    """
    if p.dim != 1:
        raise DomainError("interpolation checks are 1-D")
    T, h, K = cfg.T, cfg.h, cfg.K
    if taus is None:
        ks = np.unique(np.linspace(0, K - 1, 8).astype(int))
        taus = (ks + 0.5) * h
    taus = np.sort(np.asarray(taus, dtype=float))
    _require_small_step(p, score, cfg)
    lo, hi = bounds if bounds is not None else _default_bounds(score, T)
    pf = _PushForward(p, score, cfg, lo, hi, n_points)
    if delta is None:
        delta = 0.25 * h * (256.0 / n_points)
    x, dx = pf.x, pf.dx

    def terms(tau):
        j = int(math.floor(tau / h + 1e-12))
        k = K - j
        off = tau - j * h
        while min(pf.logd) > k:
            pf.advance(min(pf.logd))
        logd, mu_hat, _ = pf.log_density(k, off)
        t = T - tau
        law = score.marginal(t)
        log_pi = np.asarray(law.logpdf(x.reshape(-1, 1)), dtype=float)
        mu = exact_velocity(p, score, t, x.reshape(-1, 1)).ravel()
        return _grid_terms(x, dx, logd, log_pi, mu_hat, mu)

    out = {k: [] for k in ("kl", "lhs", "rhs", "fisher", "gap")}
    for tau in taus:
        j = math.floor(tau / h + 1e-12)
        if not (tau - delta >= j * h and tau + delta <= (j + 1) * h):
            raise DomainError(f"tau={tau} +/- delta leaves its step interval")
        kl_m = terms(tau - delta)[0]
        kl_p = terms(tau + delta)[0]
        kl, rhs, fisher, gap = terms(tau)
        out["kl"].append(kl)
        out["lhs"].append((kl_p - kl_m) / (2 * delta))
        out["rhs"].append(rhs)
        out["fisher"].append(fisher)
        out["gap"].append(gap)
    return InterpolationCheck(taus, *(np.array(out[k]) for k in ("kl", "lhs", "rhs", "fisher", "gap")),
                              n_points=n_points, delta=delta)


@dataclass
class FisherEnvelopeReport:
    tau: np.ndarray
    fisher_prime: np.ndarray  # int pi' |grad ln pi'|^2
    fisher_true: np.ndarray  # int pi' |grad ln pi|^2
    envelope_prime: np.ndarray  # L'_0 d + M^2 d^2 tau
    envelope_true: np.ndarray  # ... + L' zeta^2
    C: float
    tightest_ratio: float
    Lambda: float
    Lambda_prime: float


def fisher_envelope_check(p, score, cfg, n_points=1024, bounds=None, stride=1):
    """Fisher-information trajectories against Gronwall envelopes with fitted exponent C.

    C is the smallest exponent with F' <= Lambda'^C base' and F <= Lambda^C base
    at every checked time; it is reported, not asserted.
    """
    if p.dim != 1:
        raise DomainError("interpolation checks are 1-D")
    T, h, K = cfg.T, cfg.h, cfg.K
    lo, hi = bounds if bounds is not None else _default_bounds(score, T)
    pf = _PushForward(p, score, cfg, lo, hi, n_points)
    x, dx = pf.x, pf.dx
    lip = lipschitz_constants(p, score, T, h)
    Lp = _require_small_step(p, score, cfg)
    Lp0 = discrete_lipschitz(p, score, cfg, n_pairs=2000, steps=[K])
    M = lip.L_high_M
    taus, f1, f2, gaps = [], [], [], []
    for j in range(0, K + 1, stride):
        k = K - j
        if j > 0:
            while min(pf.logd) > k:
                pf.advance(min(pf.logd))
        logd = pf.logd[k]
        t = T - j * h
        law = score.marginal(t)
        log_pi = np.asarray(law.logpdf(x.reshape(-1, 1)), dtype=float)
        dens = np.exp(logd)
        ok = np.isfinite(logd) & (dens >= DENSITY_FLOOR * dens.max())
        g1 = np.gradient(np.where(ok, logd, 0.0), dx)
        g2 = np.gradient(log_pi, dx)
        use = ok.copy()
        use[1:-1] &= ok[:-2] & ok[2:]
        use[[0, -1]] = False
        w = np.where(use, dens, 0.0)
        f1.append(integrate.trapezoid(w * g1 * g1, dx=dx))
        f2.append(integrate.trapezoid(w * g2 * g2, dx=dx))
        if k >= 1:
            _, mu_hat, _ = pf.log_density(k, 0.0)
            mu = exact_velocity(p, score, t, x.reshape(-1, 1)).ravel()
            gaps.append(integrate.trapezoid(w * np.where(use, mu_hat - mu, 0.0) ** 2, dx=dx))
        else:
            gaps.append(gaps[-1] if gaps else 0.0)
        taus.append(j * h)
    taus, f1, f2, gaps = map(np.array, (taus, f1, f2, gaps))
    zeta2 = integrate.cumulative_trapezoid(gaps, taus, initial=0.0)
    base1 = Lp0 * 1 + M * M * taus
    base2 = base1 + Lp * zeta2
    c1 = np.log(np.maximum(f1 / base1, 1e-300)) / math.log(max(lip.Lambda_prime, 1.0 + 1e-12))
    c2 = np.log(np.maximum(f2 / base2, 1e-300)) / math.log(max(lip.Lambda, 1.0 + 1e-12))
    C = float(max(0.0, c1.max(), c2.max()))
    tight = float(max(np.max(f1 / (lip.Lambda_prime ** C * base1)),
                      np.max(f2 / (lip.Lambda ** C * base2))))
    return FisherEnvelopeReport(taus, f1, f2, base1, base2, C, tight, lip.Lambda, lip.Lambda_prime)


# --- drift gap ----------------------------------------------------------------------


def drift_gap_times(cfg, n=32):
    """Evenly spaced reverse times tau_i in [0, T] and the steps k whose interval holds them."""
    taus = np.linspace(0.0, cfg.T, n)
    t = cfg.T - taus
    ks = np.maximum(1, np.ceil(t / cfg.h - 1e-9).astype(int))
    return taus, ks


def drift_gap(p, score, cfg, ensemble, n_times=32):
    """Monte Carlo zeta_t^2 = E|mu_t(y_t) - mu'_k(y_kh)|^2 on the interpolated trajectories.

    ``ensemble.history`` must hold the states at every step returned by
    drift_gap_times. Returns (taus, zeta_t^2 table, zeta^2 by the trapezoid rule).
    """
    taus, ks = drift_gap_times(cfg, n_times)
    missing = [int(k) for k in ks if int(k) not in ensemble.history]
    if missing:
        raise ConfigError(f"trajectory recording lacks steps {missing[:5]}; "
                          "run the sampler with record_trajectory and drift_gap_times steps")
    z2 = np.empty(taus.size)
    for i, (tau, k) in enumerate(zip(taus, ks)):
        xk = ensemble.history[int(k)]
        t = cfg.T - tau
        mu_p = (_s.ddim_step(p, score, cfg, int(k), xk) - xk) / cfg.h
        y = xk + (k * cfg.h - t) * mu_p
        diff = exact_velocity(p, score, t, y) - mu_p
        z2[i] = float(np.mean(np.sum(diff * diff, axis=1)))
    return taus, z2, float(integrate.trapezoid(z2, taus))


def write_report_csv(path, header_line, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header_line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in (r[k] for k in fieldnames)])
