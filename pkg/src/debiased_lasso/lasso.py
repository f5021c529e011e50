"""LASSO by cyclic coordinate descent on the Gram matrix.

Solves  argmin_theta  ||Y - X theta||^2 / (2n) + lam * ||theta||_1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .model import RegressionProblem

DEFAULT_LAMBDA_CONST = 1.0


@dataclass(frozen=True)
class LassoFit:
    theta_hat: np.ndarray
    lam: float
    iterations: int
    max_kkt_violation: float
    converged: bool
    objective_trace: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.theta_hat)


def soft_threshold(z: float, t: float) -> float:
    """sign(z) * max(|z| - t, 0)."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    return float(_kernels.soft_threshold(float(z), float(t)))


def lasso_objective(problem: RegressionProblem, theta: np.ndarray, lam: float) -> float:
    r = problem.Y - problem.X @ theta
    return float(r @ r / (2 * problem.n) + lam * np.abs(theta).sum())


def kkt_violation(problem: RegressionProblem, theta: np.ndarray, lam: float) -> float:
    """Largest KKT violation of ``theta`` computed from the residual directly."""
    grad = problem.X.T @ (problem.Y - problem.X @ theta) / problem.n
    active = theta != 0
    v_act = np.abs(grad[active] - lam * np.sign(theta[active]))
    v_in = np.abs(grad[~active]) - lam
    return float(max(v_act.max(initial=0.0), v_in.max(initial=0.0), 0.0))


def gram(X: np.ndarray) -> np.ndarray:
    n = X.shape[0]
    G = X.T @ X / n
    return (G + G.T) / 2


def fit_lasso(problem: RegressionProblem, lam: float, tol: float = 1e-8,
              max_iter: int = 100_000, warm_start: Optional[np.ndarray] = None,
              gram_matrix: Optional[np.ndarray] = None, trace: bool = False) -> LassoFit:
    """Fit the LASSO at a single penalty.

    Parameters
    ----------
    problem : RegressionProblem
    lam : float
        Penalty level, must be positive.
    tol : float
        Target KKT violation; the fit is ``converged`` once
        ``|X_j'R/n - lam*sign(theta_j)| <= tol`` on the active set and
        ``|X_j'R/n| <= lam + tol`` elsewhere.
    max_iter : int
        Maximum number of full coordinate sweeps.
    warm_start : array, optional
        Starting coefficients (for example the fit at a nearby penalty).
    gram_matrix : array, optional
        Precomputed ``X'X/n``; reused across fits with the same design.
    trace : bool
        Record the objective after every sweep in ``objective_trace``.

    Non-convergence is reported through ``converged=False`` rather than raised.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    X, Y, n = problem.X, problem.Y, problem.n
    G = gram(X) if gram_matrix is None else gram_matrix
    c = X.T @ Y / n
    theta = np.zeros(problem.p) if warm_start is None else np.array(warm_start, dtype=float)
    buf = np.empty(max_iter + 1 if trace else 0)
    frozen = np.zeros(problem.p, dtype=np.bool_)
    status, sweeps, viol = _kernels.quad_l1_cd(G, c, float(lam), theta, frozen, float(tol),
                                               int(max_iter), np.inf, buf)
    obj_trace = buf[: sweeps + 1] + Y @ Y / (2 * n) if trace else np.empty(0)
    return LassoFit(theta, float(lam), int(sweeps), float(viol),
                    status == _kernels.CONVERGED, obj_trace)


def default_lambda(p: int, n: int, sigma_hat: float, c: float = DEFAULT_LAMBDA_CONST) -> float:
    """``sigma_hat * sqrt(c^2 log(p) / n)``.

    ``p = 1`` is rejected: it would give a zero penalty.
    """
    if p < 2 or n < 2:
        raise ValueError(f"default_lambda needs n, p >= 2, got n={n}, p={p}")
    if not sigma_hat > 0:
        raise ValueError("sigma_hat must be positive")
    return sigma_hat * math.sqrt(c * c * math.log(p) / n)


def lambda_max(problem: RegressionProblem) -> float:
    """Smallest penalty at which the LASSO solution is identically zero."""
    return float(np.abs(problem.X.T @ problem.Y).max() / problem.n)
