"""End-to-end inference: noise level, LASSO, debiasing matrix, report."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .debias import (DEFAULT_BETA, DEFAULT_ESCALATION, DebiasMatrix, SampleCovariance,
                     build_debias_matrix, build_debias_matrix_nodewise,
                     build_debias_matrix_nongaussian, sample_covariance)
from .errors import ConvergenceError
from .inference import DebiasedEstimate, InferenceReport, build_report, make_estimate
from .lasso import DEFAULT_LAMBDA_CONST, LassoFit, default_lambda, fit_lasso
from .model import RegressionProblem
from .noise import NoiseEstimate, estimate_sigma

METHODS = ("jm", "nodewise", "nongaussian")


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "jm"
    alpha: float = 0.05
    mu: Optional[float] = None
    lam: Optional[float] = None
    lambda_const: float = DEFAULT_LAMBDA_CONST
    beta: float = DEFAULT_BETA
    noise: str = "scaled_lasso"
    escalation: Optional[Tuple[float, int]] = DEFAULT_ESCALATION
    nodewise_lambda: Optional[float] = None
    lasso_tol: float = 1e-8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class PipelineResult:
    estimate: DebiasedEstimate
    report: InferenceReport
    fit: LassoFit
    noise: NoiseEstimate


def build_debias(X: np.ndarray, config: PipelineConfig,
                 cov: Optional[SampleCovariance] = None) -> DebiasMatrix:
    """Debiasing matrix for ``config.method``; depends on the design only."""
    if config.method == "jm":
        cov = sample_covariance(X) if cov is None else cov
        return build_debias_matrix(cov, config.mu, config.escalation)
    if config.method == "nodewise":
        return build_debias_matrix_nodewise(X, config.nodewise_lambda)
    return build_debias_matrix_nongaussian(X, config.mu, config.beta, config.escalation)


def run_pipeline(problem: RegressionProblem, config: PipelineConfig = PipelineConfig(),
                 debias: Optional[DebiasMatrix] = None, cov: Optional[SampleCovariance] = None,
                 names: Optional[Sequence[str]] = None) -> PipelineResult:
    """Estimate sigma, fit the LASSO, debias and build the inference report.

    ``debias`` and ``cov`` may be passed in when the design is reused across
    responses (simulation replications).

    Raises
    ------
    ConvergenceError
        If the noise estimator or the LASSO does not converge; ``stage`` names which.
    """
    cov = sample_covariance(problem.X) if cov is None else cov
    noise = estimate_sigma(problem, config.noise, gram_matrix=cov.matrix)
    if not noise.converged:
        raise ConvergenceError("noise", f"noise estimator did not converge "
                                        f"after {noise.iterations} iterations")
    lam = (default_lambda(problem.p, problem.n, noise.sigma_hat, config.lambda_const)
           if config.lam is None else float(config.lam))
    fit = fit_lasso(problem, lam, tol=config.lasso_tol, gram_matrix=cov.matrix,
                    warm_start=noise.theta_hat)
    if not fit.converged:
        raise ConvergenceError("lasso", f"KKT violation {fit.max_kkt_violation:.3g} after "
                                        f"{fit.iterations} sweeps")
    if debias is None:
        debias = build_debias(problem.X, config, cov)
    est = make_estimate(problem, fit, debias, noise.sigma_hat, cov)
    report = build_report(est, config.alpha, config.method, names)
    return PipelineResult(est, report, fit, noise)
