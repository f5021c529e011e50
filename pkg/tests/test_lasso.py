import numpy as np
import pytest
from conftest import orthonormal_design
from oracles import lasso_by_enumeration

from debiased_lasso.lasso import (default_lambda, fit_lasso, kkt_violation, lambda_max,
                                  lasso_objective, soft_threshold)
from debiased_lasso.model import RegressionProblem


@pytest.mark.parametrize("z, t, expected", [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0),
                                            (-0.5, 1.0, 0.0), (1.0, 1.0, 0.0)])
def test_soft_threshold(z, t, expected):
    assert soft_threshold(z, t) == expected


@pytest.mark.parametrize("z", [-2.5, 0.0, 1e-300, 7.0])
def test_soft_threshold_zero_threshold(z):
    assert soft_threshold(z, 0.0) == z


def test_soft_threshold_negative_threshold():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_orthonormal_closed_form():
    n, p = 80, 10
    X = orthonormal_design(n, p)
    Y = X @ np.linspace(-1, 1, p) + np.random.default_rng(1).standard_normal(n)
    lam = 0.3
    fit = fit_lasso(RegressionProblem(X, Y), lam, tol=1e-12)
    z = X.T @ Y / n
    expected = np.sign(z) * np.maximum(np.abs(z) - lam, 0)
    np.testing.assert_allclose(fit.theta_hat, expected, atol=1e-10)


def test_full_shrinkage_above_lambda_max(rng):
    X = rng.standard_normal((30, 8))
    prob = RegressionProblem(X, rng.standard_normal(30))
    fit = fit_lasso(prob, lambda_max(prob) * 1.0000001)
    assert not np.any(fit.theta_hat)
    assert fit.converged and fit.iterations <= 1


def test_matches_sign_enumeration_10x5(rng):
    X = rng.standard_normal((10, 5))
    Y = X @ np.array([1.0, -0.5, 0, 0, 2.0]) + 0.3 * rng.standard_normal(10)
    prob = RegressionProblem(X, Y)
    lam = 0.1
    fit = fit_lasso(prob, lam, tol=1e-12)
    _, best = lasso_by_enumeration(X, Y, lam)
    assert abs(lasso_objective(prob, fit.theta_hat, lam) - best) <= 1e-6


def test_kkt_certificate(rng):
    X = rng.standard_normal((60, 120))
    Y = X[:, :4] @ np.ones(4) + rng.standard_normal(60)
    prob = RegressionProblem(X, Y)
    fit = fit_lasso(prob, 0.1, tol=1e-9)
    assert fit.converged
    assert fit.max_kkt_violation <= 1e-9
    # recomputed from the residual, independent of the solver's bookkeeping
    assert kkt_violation(prob, fit.theta_hat, 0.1) <= 1e-8


def test_objective_trace_monotone(rng):
    X = rng.standard_normal((40, 60))
    Y = X[:, :3] @ np.array([2.0, -1.0, 1.0]) + rng.standard_normal(40)
    prob = RegressionProblem(X, Y)
    fit = fit_lasso(prob, 0.05, trace=True)
    tr = fit.objective_trace
    assert tr.shape[0] == fit.iterations + 1
    assert np.all(np.diff(tr) <= 1e-12)
    assert tr[-1] == pytest.approx(lasso_objective(prob, fit.theta_hat, 0.05), abs=1e-12)


def test_scaling_equivariance(rng):
    X = rng.standard_normal((50, 20))
    Y = X[:, :2] @ np.array([1.0, 1.0]) + rng.standard_normal(50)
    a = fit_lasso(RegressionProblem(X, Y), 0.2, tol=1e-12)
    b = fit_lasso(RegressionProblem(X, 3 * Y), 0.6, tol=1e-12)
    np.testing.assert_allclose(b.theta_hat, 3 * a.theta_hat, atol=1e-10)


def test_warm_start_reaches_same_solution(rng):
    X = rng.standard_normal((50, 30))
    prob = RegressionProblem(X, X[:, 0] + rng.standard_normal(50))
    cold = fit_lasso(prob, 0.1, tol=1e-12)
    warm = fit_lasso(prob, 0.1, tol=1e-12, warm_start=fit_lasso(prob, 0.2).theta_hat)
    np.testing.assert_allclose(warm.theta_hat, cold.theta_hat, atol=1e-10)


def test_max_iter_reported_not_raised(rng):
    X = rng.standard_normal((30, 50))
    prob = RegressionProblem(X, X[:, :5].sum(axis=1))
    fit = fit_lasso(prob, 1e-3, tol=1e-14, max_iter=2)
    assert not fit.converged and fit.iterations == 2


def test_default_lambda_value():
    assert default_lambda(600, 1000, 1.0, c=2.0) == pytest.approx(2 * np.sqrt(np.log(600) / 1000))
    assert default_lambda(600, 1000, 1.0, c=2.0) == pytest.approx(0.1600, abs=5e-5)


def test_default_lambda_linear_in_sigma():
    assert default_lambda(100, 200, 2.0) == pytest.approx(2 * default_lambda(100, 200, 1.0))


def test_default_lambda_rejects_p1():
    with pytest.raises(ValueError):
        default_lambda(1, 100, 1.0)


def test_rejects_nonpositive_lambda(rng):
    prob = RegressionProblem(rng.standard_normal((5, 2)), rng.standard_normal(5))
    with pytest.raises(ValueError):
        fit_lasso(prob, 0.0)
