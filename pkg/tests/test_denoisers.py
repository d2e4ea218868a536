import numpy as np
import pytest

from bandsub.denoisers import AnalyticGaussianDenoiser
from bandsub.diffusion import COND_NULL, COND_TARGET, make_schedule, predict_x0

S = make_schedule(1000, 50)


def test_point_mass_eps_and_x0():
    mu = np.full((1, 3, 3), 0.8)
    d = AnalyticGaussianDenoiser(S, {COND_NULL: (mu, 0.0)})
    z = np.random.default_rng(0).standard_normal((1, 3, 3))
    t = 420
    abar = S.alpha_bar[t]
    eps = d.predict(z, t, COND_NULL)
    assert np.max(np.abs(eps - (z - np.sqrt(abar) * mu) / np.sqrt(1 - abar))) < 1e-12
    assert np.max(np.abs(predict_x0(z, eps, t, S) - mu)) < 1e-10


def test_standard_normal_simplification():
    # mu=0, sigma2=1: posterior mean sqrt(abar)*z, so eps = sqrt(1-abar)*z
    d = AnalyticGaussianDenoiser(S, {COND_NULL: (0.0, 1.0)})
    z = np.random.default_rng(1).standard_normal((2, 4, 4))
    for t in (1, 57, 500, 1000):
        eps = d.predict(z, t, COND_NULL)
        assert np.max(np.abs(eps - np.sqrt(1 - S.alpha_bar[t]) * z)) < 1e-12


def test_monte_carlo_regression_oracle():
    """Binned regression of E[eps | z_t] from 1e5 forward draws must match
    the closed form. The conditional mean is linear in z for Gaussian data,
    so binning adds no systematic bias at the bin center."""
    mu, sigma2, t = 0.7, 0.64, 400
    abar = S.alpha_bar[t]
    rng = np.random.default_rng(123)
    n = 100_000
    x0 = mu + np.sqrt(sigma2) * rng.standard_normal(n)
    eps = rng.standard_normal(n)
    z = np.sqrt(abar) * x0 + np.sqrt(1 - abar) * eps

    center = np.sqrt(abar) * mu  # the z value we regress at
    half_width = 0.02 * np.std(z)
    in_bin = np.abs(z - center) < half_width
    assert in_bin.sum() > 500
    empirical = eps[in_bin].mean()
    stderr = eps[in_bin].std(ddof=1) / np.sqrt(in_bin.sum())

    d = AnalyticGaussianDenoiser(S, {COND_NULL: (mu, sigma2)})
    z_arr = np.full((1, 2, 2), center)
    analytic = d.predict(z_arr, t, COND_NULL)[0, 0, 0]
    assert abs(analytic - empirical) <= 3 * stderr


def test_per_conditioning_distributions():
    d = AnalyticGaussianDenoiser(S, {COND_NULL: (0.0, 1.0), COND_TARGET: (2.0, 0.5)})
    z = np.random.default_rng(2).standard_normal((1, 4, 4))
    assert not np.allclose(d.predict(z, 300, COND_NULL), d.predict(z, 300, COND_TARGET))
    with pytest.raises(KeyError):
        d.predict(z, 300, "unregistered")


def test_rejects_t0():
    d = AnalyticGaussianDenoiser(S, {COND_NULL: (0.0, 1.0)})
    with pytest.raises(ValueError):
        d.predict(np.ones((1, 2, 2)), 0, COND_NULL)


def test_deterministic_and_counted():
    d = AnalyticGaussianDenoiser(S, {COND_NULL: (0.0, 1.0), COND_TARGET: (1.0, 1.0)})
    z = np.random.default_rng(3).standard_normal((1, 4, 4))
    a = d.predict(z, 100, COND_NULL)
    b = d.predict(z, 100, COND_NULL)
    assert np.array_equal(a, b)
    d.predict(z, 100, COND_TARGET)
    assert d.call_counts == {COND_NULL: 2, COND_TARGET: 1}
    assert d.call_count == 3


def test_negative_variance_rejected():
    with pytest.raises(ValueError):
        AnalyticGaussianDenoiser(S, {COND_NULL: (0.0, -1.0)})
