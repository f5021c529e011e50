"""Debiased estimator, confidence intervals, p-values and multiple testing.

Normal and chi-square distribution functions come from :mod:`scipy.special`
and :mod:`scipy.stats`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special, stats

from .debias import DebiasMatrix, SampleCovariance, sample_covariance
from .errors import DimensionError
from .lasso import LassoFit
from .model import RegressionProblem


def _as_matrix(M) -> np.ndarray:
    return M.M if isinstance(M, DebiasMatrix) else np.asarray(M, dtype=float)


def debias_estimate(fit: Union[LassoFit, np.ndarray], M, problem: RegressionProblem) -> np.ndarray:
    """``theta_n + M X'(Y - X theta_n) / n``."""
    theta_n = fit.theta_hat if isinstance(fit, LassoFit) else np.asarray(fit, dtype=float)
    Mm = _as_matrix(M)
    X, Y, n, p = problem.X, problem.Y, problem.n, problem.p
    if Mm.shape != (p, p) or theta_n.shape != (p,):
        raise DimensionError("shapes of M, theta_n and X disagree")
    return theta_n + Mm @ (X.T @ (Y - X @ theta_n)) / n


def decomposition_check(theta_u, theta_n, theta0, W, M, X):
    """Split ``sqrt(n) (theta_u - theta0)`` into a noise part and a bias part.

    Returns ``(Z, Delta, max_residual)`` with ``Z = M X'W / sqrt(n)``,
    ``Delta = sqrt(n) (M S - I)(theta0 - theta_n)`` and ``max_residual`` the
    sup-norm of ``sqrt(n)(theta_u - theta0) - Z - Delta``.
    """
    X = np.asarray(X, dtype=float)
    Mm = _as_matrix(M)
    n, p = X.shape
    rn = math.sqrt(n)
    S = X.T @ X / n
    Z = Mm @ (X.T @ np.asarray(W, dtype=float)) / rn
    Delta = rn * (Mm @ S - np.eye(p)) @ (np.asarray(theta0) - np.asarray(theta_n))
    resid = rn * (np.asarray(theta_u) - np.asarray(theta0)) - Z - Delta
    return Z, Delta, float(np.abs(resid).max())


@dataclass(frozen=True)
class DebiasedEstimate:
    """Debiased estimate together with what is needed for its covariance
    ``Q = sigma_hat^2 / n * M S M'``.

    Only the diagonal of ``M S M'`` is formed by default; blocks of ``Q`` are
    computed on request.
    """

    theta_u: np.ndarray
    theta_n: np.ndarray
    debias: DebiasMatrix
    sigma_hat: float
    cov: SampleCovariance = field(repr=False)

    @property
    def n(self) -> int:
        return self.cov.n

    @property
    def p(self) -> int:
        return self.theta_u.shape[0]

    @property
    def M(self) -> np.ndarray:
        return self.debias.M

    @cached_property
    def msm_diag(self) -> np.ndarray:
        """``diag(M S M')``."""
        return np.einsum("ij,ij->i", self.M @ self.cov.matrix, self.M)

    @cached_property
    def se(self) -> np.ndarray:
        return self.sigma_hat * np.sqrt(np.maximum(self.msm_diag, 0.0) / self.n)

    def q_block(self, R: Sequence[int]) -> np.ndarray:
        """``Q[R, R]``."""
        R = np.asarray(R, dtype=np.int64)
        MR = self.M[R]
        return self.sigma_hat**2 / self.n * (MR @ self.cov.matrix @ MR.T)

    def q_matrix(self) -> np.ndarray:
        return self.q_block(np.arange(self.p))


def make_estimate(problem: RegressionProblem, fit: LassoFit, debias: DebiasMatrix,
                  sigma_hat: float, cov: Optional[SampleCovariance] = None) -> DebiasedEstimate:
    if not sigma_hat > 0:
        raise ValueError("sigma_hat must be positive")
    cov = sample_covariance(problem.X) if cov is None else cov
    theta_u = debias_estimate(fit, debias, problem)
    return DebiasedEstimate(theta_u, fit.theta_hat.copy(), debias, float(sigma_hat), cov)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def normal_quantile(q):
    return special.ndtri(q)


def ci_half_width(alpha: float, n: int, sigma_hat: float, msm_ii) -> np.ndarray:
    """``Phi^-1(1 - alpha/2) * sigma_hat / sqrt(n) * sqrt([M S M']_ii)``."""
    _check_alpha(alpha)
    return normal_quantile(1 - alpha / 2) * sigma_hat / math.sqrt(n) * np.sqrt(msm_ii)


def confidence_intervals(est: DebiasedEstimate, alpha: float):
    """Per-coordinate intervals; returns ``(lower, upper)``."""
    _check_alpha(alpha)
    if np.any(est.msm_diag < -1e-12):
        raise ValueError("diag(M S M') has negative entries")
    delta = ci_half_width(alpha, est.n, est.sigma_hat, np.maximum(est.msm_diag, 0.0))
    return est.theta_u - delta, est.theta_u + delta


def p_values_from(theta_u, se):
    """Two-sided normal p-values ``2 (1 - Phi(|theta_u| / se))``.

    Returns ``(p, degenerate)``.  Coordinates with ``se == 0`` are flagged
    as degenerate and get p = 0 (or 1 when the estimate is exactly 0).
    """
    theta_u = np.asarray(theta_u, dtype=float)
    se = np.asarray(se, dtype=float)
    degenerate = se <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(theta_u) / np.where(degenerate, 1.0, se)
    p = 2.0 * special.ndtr(-z)
    p = np.where(degenerate, np.where(theta_u == 0, 1.0, 0.0), p)
    return np.clip(p, 0.0, 1.0), degenerate


def p_values(est: DebiasedEstimate) -> np.ndarray:
    p, degenerate = p_values_from(est.theta_u, est.se)
    if degenerate.any():
        warnings.warn(f"zero standard error for coordinate(s) {np.flatnonzero(degenerate)[:10]}",
                      RuntimeWarning, stacklevel=2)
    return p


def test_decisions(pvals, alpha: float):
    """Per-coordinate rejections at ``alpha`` and at the Bonferroni level ``alpha / p``."""
    _check_alpha(alpha)
    pvals = np.asarray(pvals, dtype=float)
    return pvals <= alpha, pvals <= alpha / pvals.shape[0]


def bonferroni_adjust(pvals) -> np.ndarray:
    pvals = np.asarray(pvals, dtype=float)
    return np.minimum(1.0, pvals.shape[0] * pvals)


@dataclass(frozen=True)
class SimultaneousRegion:
    """Confidence region for ``theta0[R]``.

    ``shape='ellipsoid'``: ``(x - c)' Q^-1 (x - c) <= radius2``.
    ``shape='box'``: ``|x_j - c_j| <= half_widths[j]`` for all ``j``.
    """

    R: np.ndarray
    center: np.ndarray
    Q: np.ndarray
    alpha: float
    shape: str
    radius2: Optional[float] = None
    half_widths: Optional[np.ndarray] = None

    def contains(self, x) -> bool:
        d = np.asarray(x, dtype=float) - self.center
        if self.shape == "ellipsoid":
            return bool(d @ np.linalg.solve(self.Q, d) <= self.radius2)
        return bool(np.all(np.abs(d) <= self.half_widths))


def simultaneous_region(est: DebiasedEstimate, R: Sequence[int], alpha: float,
                        shape: str = "ellipsoid") -> SimultaneousRegion:
    """Region covering ``theta0[R]`` with asymptotic probability ``1 - alpha``.

    The ellipsoid uses the chi-square(k) quantile; the box uses the Sidak
    per-axis level ``(1 - alpha)**(1/k)``.

    Raises
    ------
    np.linalg.LinAlgError
        If ``Q[R, R]`` is singular; the message lists the coordinates involved.
    """
    _check_alpha(alpha)
    R = np.asarray(R, dtype=np.int64)
    k = R.shape[0]
    if k < 1:
        raise ValueError("R must be non-empty")
    if np.unique(R).shape[0] != k:
        raise ValueError("R has repeated indices")
    Q = est.q_block(R)
    Q = (Q + Q.T) / 2
    w, V = np.linalg.eigh(Q)
    if w[0] <= max(w[-1], 0.0) * 1e-12:
        null = np.abs(V[:, 0]) > 1e-6
        bad = R[null] if w[-1] > 0 else R
        raise np.linalg.LinAlgError(f"Q[R, R] is singular; offending coordinates {bad.tolist()}")
    center = est.theta_u[R].copy()
    if shape == "ellipsoid":
        return SimultaneousRegion(R, center, Q, alpha, shape,
                                  radius2=float(stats.chi2.ppf(1 - alpha, k)))
    if shape == "box":
        level = (1 - alpha) ** (1.0 / k)
        z = normal_quantile((1 + level) / 2)
        return SimultaneousRegion(R, center, Q, alpha, shape, half_widths=z * np.sqrt(np.diag(Q)))
    raise ValueError(f"unknown region shape {shape!r}")


@dataclass(frozen=True)
class InferenceReport:
    alpha: float
    method: str
    sigma_hat: float
    estimate: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    p_value: np.ndarray
    p_adj: np.ndarray
    reject: np.ndarray
    reject_fwer: np.ndarray
    names: Optional[tuple] = None
    degenerate: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.estimate.shape[0]

    def coord_names(self) -> list:
        if self.names is not None:
            return list(self.names)
        return [f"x{i}" for i in range(self.p)]


def build_report(est: DebiasedEstimate, alpha: float, method: str = "jm",
                 names: Optional[Sequence[str]] = None) -> InferenceReport:
    _check_alpha(alpha)
    lo, hi = confidence_intervals(est, alpha)
    p, degenerate = p_values_from(est.theta_u, est.se)
    if degenerate.any():
        warnings.warn(f"zero standard error for coordinate(s) {np.flatnonzero(degenerate)[:10]}",
                      RuntimeWarning, stacklevel=2)
    rej, rej_f = test_decisions(p, alpha)
    if names is not None and len(names) != est.p:
        raise DimensionError(f"{len(names)} names for {est.p} coordinates")
    return InferenceReport(float(alpha), method, est.sigma_hat, est.theta_u.copy(), est.se.copy(),
                           lo, hi, p, bonferroni_adjust(p), rej, rej_f,
                           tuple(names) if names is not None else None, degenerate)


test_decisions.__test__ = False  # not a pytest test
