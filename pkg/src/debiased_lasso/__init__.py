"""Debiased LASSO: confidence intervals and p-values for high-dimensional linear models."""

from .debias import (DebiasMatrix, SampleCovariance, build_debias_matrix,
                     build_debias_matrix_nodewise, build_debias_matrix_nongaussian,
                     default_mu, sample_covariance)
from .errors import ConvergenceError, DegenerateFitError, DimensionError, FactorizationError
from .inference import (DebiasedEstimate, InferenceReport, build_report, confidence_intervals,
                        debias_estimate, p_values, simultaneous_region)
from .lasso import LassoFit, default_lambda, fit_lasso
from .model import CovarianceSpec, GroundTruth, RegressionProblem, sample_problem
from .noise import estimate_sigma, quantile_lambda0, universal_lambda0
from .pipeline import PipelineConfig, PipelineResult, run_pipeline

__version__ = "0.1.0"
