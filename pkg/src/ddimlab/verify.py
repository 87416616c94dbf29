"""Property suites run by ``ddimlab verify``.

Each check returns a Result with a pass flag, a one-line detail and, on
failure, the offending input tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import diagnostics as D
from . import process as P
from . import restore_ga as G
from . import samplers as S
from . import score as SC
from .laws import GaussianMixture1D, GridDensity1D, IsotropicGaussian


@dataclass
class Result:
    name: str
    passed: bool
    detail: str
    witness: Any = None


def _ulps(err, scale):
    return err / np.spacing(np.maximum(scale, np.finfo(float).tiny))


def _all_processes():
    return [P.ou_standard(1), P.ou_standard(3), P.vp(0.1, 19.9), P.ve(1.0), P.nonlinear_test(),
            P.custom(lambda t, x: np.sin(t) * x ** 2 / (1.0 + x ** 2) - 0.3 * x,
                     lambda t: 0.5 + t, 1)]


def check_inversion(seed=0, n=10000, max_ulps=4.0):
    """degrade(s, s+dt, z, simulated_noise(z, x, s, dt)) == x.

    Durations are drawn with dt <= s and then replaced by the representable
    (s + dt) - s, which is exact in that regime.
    Errors are counted in ulps of max(|x|, |z|, |dt f_s(z)|).
    """
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for p in _all_processes():
        d = p.dim
        z = rng.normal(0, 3, (n, d))
        x = rng.normal(0, 3, (n, d))
        for _ in range(4):
            s = float(rng.uniform(0.05, 1.0))
            dt = float(rng.uniform(1e-4, 1.0)) * s
            t = s + dt
            dt = t - s
            gam = S.simulated_noise(p, z, x, s, dt)
            out = S.degrade(p, s, t, z, gam)
            scale = np.maximum(np.abs(x), np.maximum(np.abs(z), np.abs(dt * p.drift(s, z))))
            u = _ulps(np.abs(out - x), scale)
            i = np.unravel_index(np.argmax(u), u.shape)
            if u[i] > worst:
                worst = float(u[i])
                witness = (p.kind, s, dt, float(z[i]), float(x[i]))
    return Result("inversion identity", worst <= max_ulps, f"worst {worst:.1f} ulp (limit {max_ulps})",
                  witness if worst > max_ulps else None)


def _gaussian_fields():
    out = []
    for p, q0 in ((P.ou_standard(), IsotropicGaussian([0.0], 4.0)),
                  (P.vp(0.1, 19.9), IsotropicGaussian([0.5], 0.3)),
                  (P.ve(1.0), IsotropicGaussian([0.0], 1.0))):
        out.append((p, SC.analytic_score_field(p, q0)))
    return out


def check_lambda_degeneration(seed=0):
    rng = np.random.default_rng(seed)
    for p, sc in _gaussian_fields():
        cfg = S.SamplerConfig(1.0, 1e-3, 16)
        x = rng.normal(0, 2, (1000, 1))
        nu = rng.normal(size=x.shape)
        for k in (16, 300, 1000):
            a = S.ddim_step(p, sc, cfg, k, x)
            b = S.lambda_step(p, sc, cfg, k, x, nu)
            if not np.array_equal(a, b):
                return Result("lambda=0 degeneration", False, "lambda_step differs from ddim_step",
                              (p.kind, k))
    return Result("lambda=0 degeneration", True, "bitwise equal")


def check_coefficient_limit():
    worst = max(abs(S.lambda_coefficient(1000, lam) - (1 + lam * lam) / 2) for lam in (0.0, 1.0))
    return Result("lambda coefficient limit", worst <= 5e-3, f"max gap {worst:.3e} at ell=1000 (limit 5e-3)")


def check_ve_recovery(seed=0, n=1000):
    """Full-lookback DDIM on VE with sigma_t^2 = t reduces to the closed-form update."""
    rng = np.random.default_rng(seed)
    p = P.ve(1.0)
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], 1.0))
    h, worst = 1e-3, 0.0
    for cur in (0.5, 1.0, 2.0):
        ell = int(round(cur / h))
        cfg = S.SamplerConfig(cur + 1.0, h, ell)
        x = rng.normal(0, 3, (n, 1))
        out = S.ddim_step(p, sc, cfg, ell, x)
        ref = x + cur * (1 - math.sqrt(1 - h / cur)) * sc(ell * h, x)
        worst = max(worst, float(np.max(np.abs(out - ref) / np.abs(ref))))
    return Result("VE DDIM recovery", worst <= 1e-12, f"max relative error {worst:.2e} (limit 1e-12)")


def check_decomposition(seed=0, n=1000, max_ulps=8.0):
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for p, sc in _gaussian_fields():
        cfg = S.SamplerConfig(1.0, 1e-3, 16)
        x = rng.normal(0, 2, (n, 1))
        for k in (16, 200, 1000):
            out = S.ddim_step(p, sc, cfg, k, x)
            v1, v2, v3 = S.excess_terms(p, sc, cfg, k, x)
            rec = S.pf_euler_step(p, sc, k * cfg.h, cfg.h, x) + v1 + v2 + v3
            z = S.restore(p, sc, k * cfg.h, (k - cfg.ell) * cfg.h, x)
            u = _ulps(np.abs(out - rec), np.maximum(np.abs(x), np.abs(z)))
            if u.max() > worst:
                worst = float(u.max())
                witness = (p.kind, k, float(x[np.argmax(u)]))
    return Result("excess-term decomposition", worst <= max_ulps, f"worst {worst:.1f} ulp (limit {max_ulps})",
                  witness if worst > max_ulps else None)


def excess_slopes(seed=0, n=1000):
    """Log-log slopes of mean |v_i| on Gaussian/OU over dyadic sweeps.

    Returns dict: (term, axis) -> slope, with v1, v3 against h/ell and v2
    against h * ell h, varying h at fixed ell and ell at fixed h.
    """
    rng = np.random.default_rng(seed)
    p = P.ou_standard()
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], 4.0))
    t = 1.0
    x = sc.marginal(t).sample(n, rng)
    x = np.clip(x, -3, 3)
    out = {}
    hs = [4e-3, 2e-3, 1e-3, 5e-4]
    ells = [8, 16, 32, 64]
    for axis, cells in (("h", [(h, 16) for h in hs]), ("ell", [(1e-3, e) for e in ells])):
        m = {1: [], 2: [], 3: []}
        for h, ell in cells:
            cfg = S.SamplerConfig(2.0, h, ell)
            k = int(round(t / h))
            v = S.excess_terms(p, sc, cfg, k, x)
            for i in (1, 2, 3):
                m[i].append(float(np.mean(np.linalg.norm(v[i - 1], axis=1))))
        hh = np.array([c[0] for c in cells])
        ll = np.array([c[1] for c in cells], dtype=float)
        out[("v1", axis)] = D.fit_loglog_slope(hh / ll, m[1])[0]
        out[("v3", axis)] = D.fit_loglog_slope(hh / ll, m[3])[0]
        out[("v2", axis)] = D.fit_loglog_slope(hh * ll * hh, m[2])[0]
    return out


def check_excess_slopes(seed=0):
    sl = excess_slopes(seed)
    bad = {k: v for k, v in sl.items() if abs(v - 1.0) > 0.1}
    detail = ", ".join(f"{a}/{b}={v:.3f}" for (a, b), v in sorted(sl.items()))
    return Result("excess-term scaling", not bad, detail, bad or None)


def ga_slope(seed=0, n=1000):
    rng = np.random.default_rng(seed)
    p = P.ou_standard()
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], 4.0))
    x = rng.normal(0, 2, (n, 1))
    t = 1.0
    taus = [8e-3, 4e-3, 2e-3, 1e-3]
    diffs = [float(np.max(np.abs(G.ga_restore(p, sc, t, t - tau, x) - S.restore(p, sc, t, t - tau, x))))
             for tau in taus]
    return D.fit_loglog_slope(taus, diffs)[0], diffs


def check_ga_slope(seed=0):
    slope, diffs = ga_slope(seed)
    ratios = [a / b for a, b in zip(diffs, diffs[1:])]
    ok = abs(slope - 2.0) <= 0.1 and all(3.5 <= r <= 4.5 for r in ratios)
    return Result("gradient-ascent restoration order", ok,
                  f"slope {slope:.3f} (2.0 +/- 0.1), halving ratios {[round(r, 3) for r in ratios]}")


def ga_slope_nonlinear(seed=0, n=1000):
    """Same comparison on NonlinearTest with Fokker-Planck scores; reported only."""
    p = P.nonlinear_test()
    q0 = GridDensity1D.from_law(GaussianMixture1D([0.5, 0.5], [-2.0, 2.0], [0.25, 0.25]), -12, 12, 2048)
    sol = SC.fp_evolve_1d(p, q0, P.TimeGrid(1.0, 1e-3))
    sc = SC.grid_score_field(sol)
    x = np.random.default_rng(seed).uniform(-2, 2, (n, 1))
    t = 1.0
    taus = [8e-3, 4e-3, 2e-3, 1e-3]
    diffs = [float(np.max(np.abs(G.ga_restore(p, sc, t, t - tau, x) - S.restore(p, sc, t, t - tau, x))))
             for tau in taus]
    return D.fit_loglog_slope(taus, diffs)[0]


def check_ga_slope_nonlinear(seed=0):
    slope = ga_slope_nonlinear(seed)
    return Result("gradient-ascent order on NonlinearTest (reported)", True, f"slope {slope:.3f}")


def learning_rate_distances(seed=0, n=1000, tau=1e-3):
    rng = np.random.default_rng(seed)
    p = P.ou_standard()
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], 4.0))
    x = rng.normal(0, 2, (n, 1))
    t = 1.0
    var_s = sc.marginal(t - tau).variance
    target = G.ou_gaussian_argmax(x, tau, var_s)
    out = {}
    for c in (0.5, 1.0, 2.0):
        eta = c * G.learning_rate(p, t, t - tau)
        out[c] = float(np.max(np.abs(G.ga_restore(p, sc, t, t - tau, x, eta=eta) - target)))
    return out


def check_learning_rate(seed=0):
    d = learning_rate_distances(seed)
    ok = d[0.5] > d[1.0] and d[2.0] > d[1.0]
    return Result("learning-rate optimality", ok,
                  "max distance to argmax: " + ", ".join(f"eta x{c}: {v:.3e}" for c, v in d.items()))


def bilipschitz_setup(data_var=0.25, T=2.0):
    """Gaussian/OU with h the largest T/K not above 1/(4 L')."""
    p = P.ou_standard()
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], data_var))
    h = T / 8
    for _ in range(6):
        cfg = S.SamplerConfig(T, h, 2)
        Lp = D.discrete_lipschitz(p, sc, cfg, n_pairs=2000)
        h_new = T / math.ceil(4.0 * Lp * T)
        if h_new == h:
            break
        h = h_new
    return p, sc, S.SamplerConfig(T, h, 2), Lp


def check_bilipschitz(seed=0, n=10000):
    p, sc, cfg, Lp = bilipschitz_setup()
    rng = np.random.default_rng(seed)
    worst = None
    total = 0
    for k in range(1, cfg.K + 1):
        law = sc.marginal(k * cfg.h)
        z, zp = law.sample(n, rng), law.sample(n, rng)
        rep = D.bilipschitz_check(D.discrete_drift(p, sc, cfg, k), cfg.h, z, zp,
                                  offsets=rng.uniform(0, cfg.h, n))
        total += rep.violations
        if worst is None or rep.min_ratio < worst.min_ratio:
            worst = rep
    return Result("flow-map bi-Lipschitz", total == 0,
                  f"h={cfg.h:.4g}=T/K <= 1/(4L'), L'={Lp:.3f}; violations {total}; "
                  f"ratio range [{worst.min_ratio:.4f}, ...]")


def kl_derivative_refinement(n_points=512):
    p = P.ou_standard()
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], 0.25))
    cfg = S.SamplerConfig(2.0, 0.05, 4)
    a = D.kl_derivative_check(p, sc, cfg, n_points=n_points)
    b = D.kl_derivative_check(p, sc, cfg, n_points=2 * n_points)
    return a, b


def check_kl_derivative():
    a, b = kl_derivative_refinement()
    ok = b.max_residual <= 0.5 * a.max_residual
    return [Result("KL-derivative identity refinement", ok,
                   f"max residual {a.max_residual:.3e} -> {b.max_residual:.3e} under grid doubling"),
            Result("Cauchy-Schwarz bound", a.cauchy_schwarz_holds and b.cauchy_schwarz_holds,
                   f"max dKL/dtau / sqrt(Fisher*gap) = {np.max(b.lhs / b.cauchy_schwarz_bound):.3f}")]


def check_pinsker(seed=0):
    rng = np.random.default_rng(seed)
    worst, witness = -np.inf, None
    for _ in range(50):
        m1, m2 = rng.normal(0, 1, 2)
        v1, v2 = rng.uniform(0.2, 3, 2)
        a = D.GridDensity1D.from_law(IsotropicGaussian([m1], v1), -15, 15, 2049)
        b = D.GridDensity1D.from_law(IsotropicGaussian([m2], v2), -15, 15, 2049)
        gap = D.tv_grid(a, b) - math.sqrt(D.kl_grid(a, b) / 2) - 1e-6
        if gap > worst:
            worst, witness = gap, (m1, v1, m2, v2)
    return Result("Pinsker inequality", worst <= 0, f"max tv - sqrt(kl/2) - 1e-6 = {worst:.3e}",
                  witness if worst > 0 else None)


def check_fisher_envelope():
    p = P.ou_standard()
    sc = SC.analytic_score_field(p, IsotropicGaussian([0.0], 0.25))
    cfg = S.SamplerConfig(2.0, 1e-2, 16)
    rep = D.fisher_envelope_check(p, sc, cfg, n_points=1024, stride=5)
    return Result("Fisher envelope (reported)", True,
                  f"fitted C = {rep.C:.3f}, Lambda = {rep.Lambda:.3g}, Lambda' = {rep.Lambda_prime:.3g}")


SUITES = {
    "identities": lambda seed: [check_inversion(seed), check_lambda_degeneration(seed),
                                check_coefficient_limit(), check_ve_recovery(seed)],
    "appendixA": lambda seed: [check_ga_slope(seed), check_learning_rate(seed),
                               check_ga_slope_nonlinear(seed)],
    "appendixB": lambda seed: [check_decomposition(seed), check_excess_slopes(seed)],
    "appendixC": lambda seed: [check_bilipschitz(seed), *check_kl_derivative(), check_pinsker(seed),
                               check_fisher_envelope()],
}
SUITES["all"] = lambda seed: [r for name in ("identities", "appendixA", "appendixB", "appendixC")
                              for r in SUITES[name](seed)]


def run_suite(name, seed=0):
    return SUITES[name](seed)
