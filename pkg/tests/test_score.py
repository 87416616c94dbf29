import math

import numpy as np
import pytest

from ddimlab import process as P
from ddimlab import score as SC
from ddimlab.diagnostics import tv_grid, tv_hist_vs_grid
from ddimlab.errors import BoundaryError, OutOfSupportError, StabilityError, UnsupportedProcessError
from ddimlab.laws import GaussianMixture1D, GridDensity1D, IsotropicGaussian

from conftest import frozen_process


def test_analytic_score_examples():
    assert SC.analytic_score(IsotropicGaussian([0.0], 1.0), [[2.0]])[0, 0] == -2.0
    assert SC.analytic_score(IsotropicGaussian([3.0], 4.0), [[3.0]])[0, 0] == 0.0
    assert SC.analytic_score(GaussianMixture1D([0.5, 0.5], [-2, 2], [1, 1]), [[0.0]]).ravel()[0] == 0.0


def test_analytic_score_rejects_grid():
    q = GridDensity1D.from_law(IsotropicGaussian([0.0], 1.0), -8, 8, 257)
    with pytest.raises(TypeError):
        SC.analytic_score(q, [[0.0]])


def test_analytic_field_needs_linear_process():
    with pytest.raises(UnsupportedProcessError):
        SC.analytic_score_field(P.nonlinear_test(), IsotropicGaussian([0.0], 1.0))


def test_score_from_grid_examples():
    q = GridDensity1D.from_law(IsotropicGaussian([0.0], 1.0), -12, 12, 4096)
    assert abs(SC.score_from_grid(q, 1.0) + 1.0) <= 1e-4
    assert abs(SC.score_from_grid(q, 0.0)) <= 1e-6


def test_score_from_grid_support_errors():
    q = GridDensity1D.from_law(IsotropicGaussian([0.0], 1.0), -12, 12, 4096)
    with pytest.raises(OutOfSupportError):
        SC.score_from_grid(q, 11.999)
    vals = np.where(np.abs(q.x) > 6, 0.0, q.values)
    r = GridDensity1D(q.x_min, q.x_max, vals / np.trapezoid(vals, q.x))
    with pytest.raises(OutOfSupportError):
        SC.score_from_grid(r, 8.0)


def test_grid_vs_analytic_score_linear_process():
    p = P.ou_standard()
    law = P.ou_marginal(IsotropicGaussian([0.5], 2.0), 0.7)
    lo, hi = -12.0, 12.0
    q = GridDensity1D.from_law(law, lo, hi, 4096)
    sd = math.sqrt(law.variance)
    # central 80% of the probability mass
    xs = np.linspace(0.5 * math.exp(-0.7) - 1.2816 * sd, 0.5 * math.exp(-0.7) + 1.2816 * sd, 501)
    got = SC.grid_score_values(q.x_min, q.dx, q.values, xs)
    np.testing.assert_allclose(got, law.score(xs.reshape(-1, 1)).ravel(), atol=1e-3)


def test_fp_frozen_dynamics():
    q0 = GridDensity1D.from_law(IsotropicGaussian([0.0], 1.0), -8, 8, 257)
    sol = SC.fp_evolve_1d(frozen_process(), q0, P.TimeGrid(1.0, 0.1))
    for i in range(len(sol.times)):
        np.testing.assert_allclose(sol.values[i], q0.values, rtol=0, atol=1e-15)


def test_fp_ou_against_closed_form():
    q0 = GridDensity1D.from_law(IsotropicGaussian([0.0], 4.0), -16, 16, 4096)
    sol = SC.fp_evolve_1d(P.ou_standard(), q0, P.TimeGrid(1.0, 1e-2))
    ref = GridDensity1D.from_law(P.ou_marginal(IsotropicGaussian([0.0], 4.0), 1.0), -16, 16, 4096)
    l1 = np.trapezoid(np.abs(sol.values[-1] - ref.values), dx=q0.dx)
    assert l1 <= 1e-3


def test_fp_nonlinear_against_monte_carlo():
    q0 = GridDensity1D.from_law(IsotropicGaussian([0.0], 1.0), -10, 10, 2048)
    p = P.nonlinear_test()
    sol = SC.fp_evolve_1d(p, q0, P.TimeGrid(1.0, 1e-3))
    x0 = np.random.default_rng(0).standard_normal((10 ** 6, 1))
    x = P.simulate_forward_em(p, x0, P.TimeGrid(1.0, 1e-3), seed=4, threads=8)
    assert tv_hist_vs_grid(x, sol.density(-1)) <= 0.01


def test_fp_richardson_score():
    p = P.nonlinear_test()
    law = GaussianMixture1D([0.5, 0.5], [-2, 2], [0.25, 0.25])
    vals = []
    for n in (2048, 4096):
        q0 = GridDensity1D.from_law(law, -12, 12, n)
        sol = SC.fp_evolve_1d(p, q0, P.TimeGrid(0.5, 1e-3))
        vals.append(SC.grid_score_field(sol)(0.5, np.array([[0.7]])).item())
    assert abs(vals[0] - vals[1]) <= 1e-2 * abs(vals[1])


def test_fp_stability_and_boundary_errors():
    q0 = GridDensity1D.from_law(IsotropicGaussian([0.0], 1.0), -12, 12, 4096)
    with pytest.raises(StabilityError):
        SC.fp_evolve_1d(P.ou_standard(), q0, P.TimeGrid(0.1, 0.1), substeps=1)
    narrow = GridDensity1D.from_law(IsotropicGaussian([0.0], 0.05), -1.5, 1.5, 512)
    with pytest.raises(BoundaryError):
        SC.fp_evolve_1d(P.ve(1.0), narrow, P.TimeGrid(1.0, 0.01))


def test_grid_field_time_interpolation():
    q0 = GridDensity1D.from_law(IsotropicGaussian([0.0], 4.0), -16, 16, 2048)
    sol = SC.fp_evolve_1d(P.ou_standard(), q0, P.TimeGrid(1.0, 0.1))
    f = SC.grid_score_field(sol)
    x = np.array([[0.3], [1.0]])
    mid = f(0.25, x)
    np.testing.assert_allclose(mid, 0.5 * (f(0.2, x) + f(0.3, x)), rtol=1e-12)
    exact = P.ou_marginal(IsotropicGaussian([0.0], 4.0), 0.25).score(x)
    np.testing.assert_allclose(mid, exact, rtol=2e-3)
