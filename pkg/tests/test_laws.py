import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from ddimlab.errors import DomainError
from ddimlab.laws import GaussianMixture1D, GridDensity1D, IsotropicGaussian


def test_gaussian_against_scipy():
    law = IsotropicGaussian([1.0, -2.0], 3.0)
    x = np.array([[0.0, 0.0], [1.0, 5.0]])
    ref = stats.multivariate_normal([1.0, -2.0], 3.0 * np.eye(2)).logpdf(x)
    np.testing.assert_allclose(law.logpdf(x), ref, rtol=1e-13)
    np.testing.assert_allclose(law.score(x), -(x - [1.0, -2.0]) / 3.0)


def test_gaussian_rejects_bad_variance():
    with pytest.raises(DomainError):
        IsotropicGaussian([0.0], 0.0)
    with pytest.raises(DomainError):
        IsotropicGaussian([0.0], -1.0)


def test_mixture_against_scipy():
    law = GaussianMixture1D([0.3, 0.7], [-1.0, 2.0], [0.5, 2.0])
    x = np.linspace(-5, 5, 41)
    ref = 0.3 * stats.norm(-1, math.sqrt(0.5)).pdf(x) + 0.7 * stats.norm(2, math.sqrt(2)).pdf(x)
    np.testing.assert_allclose(law.pdf(x.reshape(-1, 1)), ref, rtol=1e-12)
    eps = 1e-6
    fd = (np.log(law.pdf((x + eps).reshape(-1, 1))) - np.log(law.pdf((x - eps).reshape(-1, 1)))) / (2 * eps)
    np.testing.assert_allclose(law.score(x.reshape(-1, 1)).ravel(), fd, rtol=1e-6, atol=1e-8)
    assert law.mean() == pytest.approx(0.3 * -1 + 0.7 * 2)


def test_mixture_weights_must_sum_to_one():
    with pytest.raises(DomainError):
        GaussianMixture1D([0.3, 0.3], [0.0, 1.0], [1.0, 1.0])


def test_grid_from_law_mass_and_moments():
    q = GridDensity1D.from_law(IsotropicGaussian([0.5], 2.0), -15, 16, 4097)
    assert q.mass() == pytest.approx(1.0, abs=1e-12)
    m, v = q.moments()
    assert m == pytest.approx(0.5, abs=1e-6) and v == pytest.approx(2.0, rel=1e-5)


def test_grid_mass_check():
    with pytest.raises(DomainError):
        GridDensity1D(0.0, 1.0, [1.0, 1.0, 3.0])


def test_grid_csv_round_trip(tmp_path):
    q = GridDensity1D.from_law(GaussianMixture1D([0.5, 0.5], [-2, 2], [0.25, 0.25]), -8, 8, 513)
    q.to_csv(tmp_path / "q.csv")
    r = GridDensity1D.from_csv(tmp_path / "q.csv")
    assert r.same_grid(q)
    np.testing.assert_array_equal(r.values, q.values)


@settings(max_examples=60, deadline=None)
@given(u=st.floats(1e-9, 1 - 1e-9))
def test_quantile_inverts_cdf(u):
    q = GridDensity1D.from_law(GaussianMixture1D([0.4, 0.6], [-2, 1], [0.3, 1.0]), -10, 10, 1025)
    assert q.cdf(q.quantile(u)) == pytest.approx(u, abs=1e-10)


def test_grid_sampling_matches_law(rng):
    law = IsotropicGaussian([0.0], 1.0)
    q = GridDensity1D.from_law(law, -10, 10, 4097)
    x = q.sample(200000, rng).ravel()
    assert stats.kstest(x, "norm").pvalue > 1e-3
