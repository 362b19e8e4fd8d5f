import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from conftest import logistic_data
from leastfalse._linalg import SingularInformationError
from leastfalse.core import Dataset, Link
from leastfalse.fit import FitConfig, FitError, fit_mle
from leastfalse.likelihood import information_matrix
from leastfalse.oracle import least_false
from leastfalse.sandwich import (
    CovarianceReport,
    Flavor,
    covariance_at,
    covariance_report,
    estimate_J_hat,
    estimate_K_hat,
    jk_statistic,
    misspecification_test,
    sandwich_from,
    wald_interval,
)


def s1_data(rng, n):
    x = rng.choice([-1.0, 0.0, 1.0], n)
    z = (rng.random(n) < np.where(x < 0, 0.2, 0.9)).astype(float)
    return Dataset.from_arrays(x, z)


def test_J_hat_at_zero(rng):
    data = logistic_data(rng, 50)
    assert_allclose(estimate_J_hat(Link.LOGISTIC, np.zeros(2), data), data.X.T @ data.X / 200, atol=1e-15)


def test_intercept_only_plug_in():
    z = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0.0])
    data = Dataset(np.ones((10, 1)), z)
    b = np.array([special.logit(0.3)])
    assert_allclose(estimate_J_hat(Link.LOGISTIC, b, data), [[0.21]], rtol=1e-13)
    assert_allclose(estimate_K_hat(Link.LOGISTIC, b, data), [[0.21]], rtol=1e-13)


def test_J_hat_is_information_matrix(rng):
    data = logistic_data(rng, 80)
    b = np.array([0.2, -0.3])
    for link in Link:
        assert np.array_equal(estimate_J_hat(link, b, data), information_matrix(link, b, data))


def test_K_hat_constant_residual_magnitude(rng):
    # at beta = 0 every logistic residual is +-1/2
    data = logistic_data(rng, 40)
    assert_allclose(estimate_K_hat(Link.LOGISTIC, np.zeros(2), data), 0.25 * data.X.T @ data.X / data.n, atol=1e-15)


def test_well_specified_J_close_to_K():
    data = logistic_data(np.random.default_rng(21), 100_000)
    rep = covariance_report(Link.LOGISTIC, fit_mle(Link.LOGISTIC, data), data)
    assert np.max(np.abs(rep.J_hat - rep.K_hat)) <= 0.02
    assert_allclose(rep.sandwich_cov, rep.naive_cov, rtol=0.15)


def test_report_properties(rng):
    data = s1_data(rng, 3000)
    rep = covariance_report(Link.LOGISTIC, fit_mle(Link.LOGISTIC, data), data)
    for m in (rep.J_hat, rep.K_hat, rep.naive_cov, rep.sandwich_cov):
        assert np.max(np.abs(m - m.T)) <= 1e-12 * np.max(np.abs(m))
    assert np.min(np.linalg.eigvalsh(rep.naive_cov)) > 0
    assert np.min(np.linalg.eigvalsh(rep.sandwich_cov)) >= 0
    assert_allclose(rep.standard_errors(Flavor.NAIVE) ** 2, np.diag(rep.naive_cov))


def test_sandwich_reduction_identity(rng):
    data = s1_data(rng, 500)
    J = estimate_J_hat(Link.LOGISTIC, fit_mle(Link.LOGISTIC, data).beta_hat, data)
    Jinv, S = sandwich_from(J, J)
    assert_allclose(S, Jinv, rtol=1e-12)


def test_duplication_halves_covariances(rng):
    data = s1_data(rng, 400)
    fit = fit_mle(Link.LOGISTIC, data)
    twice = Dataset(np.vstack([data.X, data.X]), np.concatenate([data.z, data.z]))
    a = covariance_at(Link.LOGISTIC, fit.beta_hat, data)
    b = covariance_at(Link.LOGISTIC, fit.beta_hat, twice)
    assert_allclose(b.naive_cov, a.naive_cov / 2, rtol=1e-12)
    assert_allclose(b.sandwich_cov, a.sandwich_cov / 2, rtol=1e-12)


def test_order_invariance(rng):
    data = s1_data(rng, 400)
    b = fit_mle(Link.LOGISTIC, data).beta_hat
    perm = data.take(rng.permutation(data.n))
    assert_allclose(estimate_J_hat(Link.LOGISTIC, b, perm), estimate_J_hat(Link.LOGISTIC, b, data), rtol=1e-13)
    assert_allclose(estimate_K_hat(Link.LOGISTIC, b, perm), estimate_K_hat(Link.LOGISTIC, b, data), rtol=1e-13)


def test_single_observation_is_singular():
    data = Dataset.from_arrays([0.5], [1.0])
    fit = fit_mle(Link.LOGISTIC, data)
    with pytest.raises(SingularInformationError):
        covariance_report(Link.LOGISTIC, fit, data)


def test_unconverged_fit_rejected():
    data = logistic_data(np.random.default_rng(1), 300)
    fit = fit_mle(Link.LOGISTIC, data, FitConfig(max_iterations=1))
    with pytest.raises(FitError):
        covariance_report(Link.LOGISTIC, fit, data)


def test_wald_interval_arithmetic():
    rep = CovarianceReport(np.eye(1), np.eye(1), np.array([[0.01]]), np.array([[0.01]]), 100)
    lo, hi = wald_interval(rep, [1.0], 0, 0.95, Flavor.NAIVE)
    assert_allclose([lo, hi], [1 - 1.959963984540054 * 0.1, 1 + 1.959963984540054 * 0.1], rtol=1e-14)
    lo, hi = wald_interval(rep, [1.0], 0, 1e-12)
    assert hi - lo < 1e-12
    with pytest.raises(ValueError):
        wald_interval(rep, [1.0], 0, 1.0)


def test_s1_interval_width_matches_oracle_direction(s1, rng):
    H, truth = s1
    lf = least_false(Link.LOGISTIC, H, truth)
    diff = np.diag(lf.population_sandwich - np.linalg.inv(lf.population_J))
    data = s1_data(rng, 4000)
    fit = fit_mle(Link.LOGISTIC, data)
    rep = covariance_report(Link.LOGISTIC, fit, data)
    for u in range(2):
        wn = np.diff(wald_interval(rep, fit.beta_hat, u, 0.95, Flavor.NAIVE))[0]
        ws = np.diff(wald_interval(rep, fit.beta_hat, u, 0.95, Flavor.SANDWICH))[0]
        assert np.sign(ws - wn) == np.sign(diff[u])


def test_s1_slope_variance_differs_from_naive(s1):
    # population values stand in for the Monte Carlo spread: the gap in the slope variance
    # is much larger than the sampling error of the sandwich estimate at n = 4000
    H, truth = s1
    lf = least_false(Link.LOGISTIC, H, truth)
    naive, sand = np.linalg.inv(lf.population_J)[1, 1], lf.population_sandwich[1, 1]
    rng = np.random.default_rng(8)
    est = []
    for _ in range(40):
        data = s1_data(rng, 4000)
        fit = fit_mle(Link.LOGISTIC, data)
        est.append(covariance_report(Link.LOGISTIC, fit, data).sandwich_cov[1, 1] * data.n)
    est = np.array(est)
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert abs(est.mean() - sand) < 3 * se + 0.05 * sand
    assert abs(est.mean() - naive) > 3 * se


def test_jk_statistic_zero_gives_p_one(rng):
    assert jk_statistic(np.eye(2), np.eye(2), 100) == 0.0
    data = logistic_data(rng, 300)
    fit = fit_mle(Link.LOGISTIC, data)
    rep = misspecification_test(Link.LOGISTIC, fit, data, 200, seed=1)
    assert rep.statistic >= 0 and 0 <= rep.p_value <= 1
    assert rep.bootstrap_replicates == 200 and rep.dropped_replicates == 0


def test_gof_deterministic_and_rejects_s1():
    data = s1_data(np.random.default_rng(77), 4000)
    fit = fit_mle(Link.LOGISTIC, data)
    a = misspecification_test(Link.LOGISTIC, fit, data, 200, seed=5)
    b = misspecification_test(Link.LOGISTIC, fit, data, 200, seed=5)
    assert a == b
    assert a.p_value < 0.05


def test_gof_needs_enough_replicates(rng):
    data = logistic_data(rng, 100)
    with pytest.raises(ValueError):
        misspecification_test(Link.LOGISTIC, fit_mle(Link.LOGISTIC, data), data, 50)


def test_k_integrand_identity():
    q = np.linspace(0.0, 1.0, 101)
    assert_allclose((1 - q) ** 2 * q + q**2 * (1 - q), q * (1 - q), atol=1e-15)
