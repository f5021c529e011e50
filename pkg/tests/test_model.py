import numpy as np
import pytest

from debiased_lasso.errors import DimensionError, FactorizationError
from debiased_lasso.model import (CovarianceSpec, GaussianNoise, GroundTruth, RegressionProblem,
                                  build_circulant_sigma, cholesky_factor, make_rng,
                                  random_support, sample_design, sample_problem)


def test_circulant_first_row_p600():
    S = build_circulant_sigma(600)
    row = S[0]
    assert row[0] == 1.0
    # 1-based columns 2..6 and 596..600
    np.testing.assert_array_equal(row[1:6], 0.1)
    np.testing.assert_array_equal(row[595:600], 0.1)
    assert np.count_nonzero(row) == 11


def test_circulant_is_symmetric_and_circulant():
    S = build_circulant_sigma(40)
    np.testing.assert_array_equal(S, S.T)
    for k in range(40):
        np.testing.assert_array_equal(S[k], np.roll(S[0], k))


def test_circulant_outside_band_is_zero():
    assert build_circulant_sigma(12)[0, 6] == 0.0


def test_circulant_positive_definite_p20():
    assert np.linalg.eigvalsh(build_circulant_sigma(20)).min() > 0


@pytest.mark.parametrize("p", [1, 5, 11])
def test_circulant_too_small(p):
    with pytest.raises(DimensionError):
        build_circulant_sigma(p)


def test_covariance_from_csv(tmp_path):
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    path = tmp_path / "sigma.csv"
    np.savetxt(path, S, delimiter=",")
    spec = CovarianceSpec.from_csv(path)
    np.testing.assert_array_equal(spec.dense(), S)


def test_non_pd_covariance_rejected():
    spec = CovarianceSpec.from_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(FactorizationError):
        cholesky_factor(spec)


def test_sample_problem_deterministic():
    truth = random_support(30, 3, 1.0, seed=1)
    spec = CovarianceSpec.circulant(30)
    a = sample_problem(spec, truth, 50, GaussianNoise(1.0), seed=7)
    b = sample_problem(spec, truth, 50, GaussianNoise(1.0), seed=7)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Y, b.Y)


def test_zero_signal_mean_of_y():
    truth = GroundTruth.from_support(20, [], 0.0)
    prob = sample_problem(CovarianceSpec.identity(20), truth, 1000, GaussianNoise(1.0), seed=3)
    assert abs(prob.Y.mean()) <= 4 / np.sqrt(1000)


def test_identity_design_lln():
    X = sample_design(CovarianceSpec.identity(10), 5000, make_rng(5))
    assert np.abs(X.T @ X / 5000 - np.eye(10)).max() <= 0.1


def test_circulant_design_matches_population():
    # fourth-moment bound: sd of an entry of X'X/n is at most sqrt(2/n)
    spec = CovarianceSpec.circulant(15)
    X = sample_design(spec, 20000, make_rng(9))
    assert np.abs(X.T @ X / 20000 - spec.dense()).max() <= 6 * np.sqrt(2 / 20000)


def test_streams_are_separate():
    a = make_rng(4, 0).standard_normal(5)
    b = make_rng(4, 1).standard_normal(5)
    assert not np.allclose(a, b)


def test_support_extremes():
    empty = random_support(10, 0, 0.5, seed=0)
    assert empty.s0 == 0 and not np.any(empty.theta0)
    full = random_support(10, 10, 0.5, seed=0)
    np.testing.assert_array_equal(full.theta0, 0.5)


def test_support_size_and_value():
    t = random_support(600, 10, 0.5, seed=2014)
    assert np.count_nonzero(t.theta0) == 10
    np.testing.assert_array_equal(t.theta0[t.support], 0.5)


def test_problem_validation():
    with pytest.raises(DimensionError):
        RegressionProblem(np.zeros((5, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        RegressionProblem(np.full((3, 2), np.nan), np.zeros(3))
    prob = RegressionProblem(np.ones((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        prob.X[0, 0] = 2.0


def test_centered_and_normalized():
    X = np.random.default_rng(0).standard_normal((20, 3)) + 5
    prob = RegressionProblem(X, np.arange(20.0)).centered().normalized()
    np.testing.assert_allclose(prob.X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(prob.X, axis=0), np.sqrt(20))
