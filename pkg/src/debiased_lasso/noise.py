"""Noise-level estimation for the standardized debiased statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .errors import DegenerateFitError
from .lasso import fit_lasso, gram
from .model import RegressionProblem

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class NoiseEstimate:
    sigma_hat: float
    lambda_used: float
    iterations: int
    converged: bool
    history: tuple = field(default=(), repr=False)
    theta_hat: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


def universal_lambda0(n: int, p: int) -> float:
    """``sqrt(2 log p / n)``."""
    return math.sqrt(2 * math.log(p) / n) if p > 1 else math.sqrt(2 / n)


def quantile_lambda0(n: int, p: int) -> float:
    """Quantile-based penalty ``sqrt(2/n) * L`` with ``L = -Phi^-1(k/p)``, ``k = L^4 + 2 L^2``.

    The fixed point for ``L`` is found by damped iteration.  The level is
    smaller than :func:`universal_lambda0`, which over-penalizes and inflates
    the noise estimate when many coefficients are small but nonzero.
    """
    if p == 1:
        return math.sqrt(2 / n) * 0.5
    L = 0.1
    for _ in range(1000):
        k = L**4 + 2 * L**2
        new = 0.5 * (L - float(special.ndtri(min(k / p, 0.99))))
        if abs(new - L) <= 1e-12:
            L = new
            break
        L = new
    return math.sqrt(2 / n) * L


def estimate_sigma_scaled_lasso(problem: RegressionProblem, lambda0: Optional[float] = None,
                                tol: float = 1e-6, max_iter: int = 100,
                                gram_matrix: Optional[np.ndarray] = None,
                                lasso_tol: float = 1e-10) -> NoiseEstimate:
    """Scaled LASSO: iterate ``sigma <- ||Y - X theta(sigma * lambda0)||_2 / sqrt(n)``.

    ``lambda0`` defaults to :func:`quantile_lambda0`.  Starts from
    ``||Y||_2 / sqrt(n)`` and warm-starts every LASSO fit from the previous one.  Stops once two successive iterates differ by at most
    ``tol``; otherwise returns the last iterate with ``converged=False``.

    Raises
    ------
    DegenerateFitError
        If the residual norm collapses below 1e-12 (exact fit, e.g. ``Y = 0``).
    """
    n, p = problem.n, problem.p
    if n < 3:
        raise ValueError("scaled LASSO needs n >= 3")
    lam0 = quantile_lambda0(n, p) if lambda0 is None else float(lambda0)
    if not lam0 > 0:
        raise ValueError("lambda0 must be positive")
    G = gram(problem.X) if gram_matrix is None else gram_matrix
    sigma = float(np.linalg.norm(problem.Y) / math.sqrt(n))
    history = [sigma]
    theta = np.zeros(p)
    converged = False
    it = 0
    while it < max_iter:
        if sigma < SIGMA_FLOOR:
            raise DegenerateFitError(f"noise estimate collapsed to {sigma:.3g} (exact fit)")
        fit = fit_lasso(problem, sigma * lam0, tol=lasso_tol, warm_start=theta, gram_matrix=G)
        theta = fit.theta_hat
        new = float(np.linalg.norm(problem.Y - problem.X @ theta) / math.sqrt(n))
        it += 1
        history.append(new)
        done = abs(new - sigma) <= tol
        sigma = new
        if done:
            converged = True
            break
    if sigma < SIGMA_FLOOR:
        raise DegenerateFitError(f"noise estimate collapsed to {sigma:.3g} (exact fit)")
    return NoiseEstimate(sigma, sigma * lam0, it, converged, tuple(history), theta)


def estimate_sigma_post_selection(problem: RegressionProblem, lambda0: Optional[float] = None,
                                  gram_matrix: Optional[np.ndarray] = None) -> NoiseEstimate:
    """Residual s.d. of an OLS refit on the scaled-LASSO support, ``||R||_2 / sqrt(n - s_hat)``."""
    base = estimate_sigma_scaled_lasso(problem, lambda0, gram_matrix=gram_matrix)
    support = np.flatnonzero(base.theta_hat)
    n = problem.n
    if support.size >= n:
        raise DegenerateFitError(f"selected {support.size} covariates with only n={n} rows")
    if support.size:
        Xs = problem.X[:, support]
        coef, *_ = np.linalg.lstsq(Xs, problem.Y, rcond=None)
        r = problem.Y - Xs @ coef
    else:
        r = problem.Y
    sigma = float(np.linalg.norm(r) / math.sqrt(n - support.size))
    if sigma < SIGMA_FLOOR:
        raise DegenerateFitError(f"noise estimate collapsed to {sigma:.3g} (exact fit)")
    return NoiseEstimate(sigma, base.lambda_used, base.iterations, base.converged,
                         base.history, base.theta_hat)


def sigma_oracle_passthrough(problem: RegressionProblem) -> NoiseEstimate:
    """Return the known generating s.d.; ``lambda_used`` is 0 as a sentinel."""
    if problem.sigma_known is None:
        raise ValueError("problem carries no known sigma")
    return NoiseEstimate(float(problem.sigma_known), 0.0, 0, True)


def estimate_sigma(problem: RegressionProblem, method: str = "scaled_lasso",
                   gram_matrix: Optional[np.ndarray] = None) -> NoiseEstimate:
    if method == "scaled_lasso":
        return estimate_sigma_scaled_lasso(problem, gram_matrix=gram_matrix)
    if method == "post_selection":
        return estimate_sigma_post_selection(problem, gram_matrix=gram_matrix)
    if method == "oracle":
        return sigma_oracle_passthrough(problem)
    raise ValueError(f"unknown noise estimator {method!r}")
