"""Problem types and synthetic data generation.

Random streams use numpy's PCG64 bit generator.  A stream is identified by
``(seed, purpose)``: the design/coefficient stream of a configuration uses
purpose 0, and the noise of realization ``r`` uses seed ``seed + r`` with
purpose 1, so noise draws never alias the design draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import DimensionError, FactorizationError

DESIGN_STREAM = 0
NOISE_STREAM = 1
SUPPORT_STREAM = 2

CIRCULANT_BAND_VALUE = 0.1
CIRCULANT_BAND_WIDTH = 5


def make_rng(seed: int, purpose: int = DESIGN_STREAM) -> np.random.Generator:
    """PCG64 generator for ``(seed, purpose)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(purpose,))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RegressionProblem:
    """Design ``X`` (n x p), response ``Y`` and, in simulations, the true noise s.d."""

    X: np.ndarray
    Y: np.ndarray
    sigma_known: Optional[float] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.ndim != 2:
            raise DimensionError(f"X must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DimensionError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if Y.shape[0] != n:
            raise DimensionError(f"Y has length {Y.shape[0]} but X has {n} rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains non-finite entries")
        if self.sigma_known is not None and not self.sigma_known > 0:
            raise ValueError("sigma_known must be positive")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def centered(self) -> "RegressionProblem":
        """Copy with Y and every column of X centered (no-intercept model)."""
        return RegressionProblem(self.X - self.X.mean(axis=0), self.Y - self.Y.mean(),
                                 self.sigma_known)

    def normalized(self) -> "RegressionProblem":
        """Copy with columns rescaled to Euclidean norm sqrt(n); zero columns are kept."""
        norms = np.linalg.norm(self.X, axis=0)
        scale = np.where(norms > 0, np.sqrt(self.n) / np.where(norms > 0, norms, 1.0), 1.0)
        return RegressionProblem(self.X * scale, self.Y, self.sigma_known)


@dataclass(frozen=True)
class GroundTruth:
    theta0: np.ndarray
    support: np.ndarray
    b: float

    @property
    def s0(self) -> int:
        return int(self.support.shape[0])

    @property
    def p(self) -> int:
        return int(self.theta0.shape[0])

    @classmethod
    def from_support(cls, p: int, support, b: float) -> "GroundTruth":
        support = np.unique(np.asarray(support, dtype=np.int64))
        if support.size and (support[0] < 0 or support[-1] >= p):
            raise ValueError("support index out of range")
        theta0 = np.zeros(p)
        theta0[support] = b
        if b == 0 and support.size:
            raise ValueError("b must be nonzero when the support is non-empty")
        return cls(theta0, support, float(b))


@dataclass(frozen=True)
class CovarianceSpec:
    """Population covariance of the design rows.

    ``kind`` is ``"identity"``, ``"circulant"`` or ``"matrix"``; the last one
    carries the user-supplied ``matrix``.
    """

    kind: str
    p: int
    matrix: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("identity", "circulant", "matrix"):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "matrix":
            if self.matrix is None:
                raise ValueError("kind='matrix' needs a matrix")
            S = np.asarray(self.matrix, dtype=float)
            if S.shape != (self.p, self.p):
                raise DimensionError(f"covariance has shape {S.shape}, expected {(self.p, self.p)}")
            if not np.allclose(S, S.T, rtol=0, atol=1e-12):
                raise ValueError("covariance matrix is not symmetric")
            object.__setattr__(self, "matrix", S)
        elif self.kind == "circulant":
            build_circulant_sigma(self.p)  # validates p

    @classmethod
    def identity(cls, p: int) -> "CovarianceSpec":
        return cls("identity", p)

    @classmethod
    def circulant(cls, p: int) -> "CovarianceSpec":
        return cls("circulant", p)

    @classmethod
    def from_matrix(cls, S) -> "CovarianceSpec":
        S = np.asarray(S, dtype=float)
        return cls("matrix", S.shape[0], S)

    @classmethod
    def from_csv(cls, path) -> "CovarianceSpec":
        """Read a headerless, comma-separated p x p matrix."""
        S = np.loadtxt(path, delimiter=",", ndmin=2)
        if S.shape[0] != S.shape[1]:
            raise DimensionError(f"covariance CSV is {S.shape[0]}x{S.shape[1]}, not square")
        return cls.from_matrix(S)

    def dense(self) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.p)
        if self.kind == "circulant":
            return build_circulant_sigma(self.p)
        return self.matrix.copy()


def build_circulant_sigma(p: int) -> np.ndarray:
    """Symmetric circulant covariance: 1 on the diagonal, 0.1 for circular
    distance 1..5, 0 elsewhere.

    Raises
    ------
    DimensionError
        If ``p <= 11``, where the two bands of a row would touch or overlap.
    """
    p = int(p)
    if p <= 2 * CIRCULANT_BAND_WIDTH + 1:
        raise DimensionError(f"circulant covariance needs p > 11, got p={p}")
    idx = np.arange(p)
    diff = np.abs(idx[:, None] - idx[None, :])
    dist = np.minimum(diff, p - diff)
    S = np.where((dist >= 1) & (dist <= CIRCULANT_BAND_WIDTH), CIRCULANT_BAND_VALUE, 0.0)
    np.fill_diagonal(S, 1.0)
    return S


def random_support(p: int, s0: int, b: float, seed: int) -> GroundTruth:
    """Uniformly random support of size ``s0`` with every active coefficient equal to ``b``."""
    if not 0 <= s0 <= p:
        raise ValueError(f"need 0 <= s0 <= p, got s0={s0}, p={p}")
    rng = make_rng(seed, SUPPORT_STREAM)
    support = np.sort(rng.choice(p, size=s0, replace=False)) if s0 else np.empty(0, np.int64)
    return GroundTruth.from_support(p, support, b)


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("noise sigma must be positive")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.sigma * rng.standard_normal(n)


@dataclass(frozen=True)
class CustomNoise:
    """Noise from a user hook ``draw(rng, n) -> array``; ``sigma`` is its s.d. if known."""

    draw: Callable[[np.random.Generator, int], np.ndarray]
    sigma: Optional[float] = None


Noise = Union[GaussianNoise, CustomNoise]


def cholesky_factor(spec: CovarianceSpec) -> np.ndarray:
    S = spec.dense()
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance is not positive definite") from exc


def sample_design(spec: CovarianceSpec, n: int, rng: np.random.Generator,
                  chol: Optional[np.ndarray] = None) -> np.ndarray:
    """``n`` i.i.d. rows from N(0, Sigma) through the lower Cholesky factor."""
    if spec.kind == "identity":
        return rng.standard_normal((n, spec.p))
    L = cholesky_factor(spec) if chol is None else chol
    return rng.standard_normal((n, spec.p)) @ L.T


def draw_noise(noise: Noise, n: int, rng: np.random.Generator) -> np.ndarray:
    W = np.asarray(noise.draw(rng, n), dtype=float)
    if W.shape != (n,):
        raise DimensionError(f"noise hook returned shape {W.shape}, expected ({n},)")
    return W


def sample_problem(spec: CovarianceSpec, truth: GroundTruth, n: int, noise: Noise,
                   seed: int) -> RegressionProblem:
    """Draw ``X`` rows from N(0, Sigma) and ``Y = X theta0 + W``.

    The design comes from the ``(seed, 0)`` stream and the noise from
    ``(seed, 1)``; identical arguments give bit-identical output.
    """
    if truth.p != spec.p:
        raise DimensionError(f"truth has p={truth.p} but covariance has p={spec.p}")
    X = sample_design(spec, n, make_rng(seed, DESIGN_STREAM))
    W = draw_noise(noise, n, make_rng(seed, NOISE_STREAM))
    return RegressionProblem(X, X @ truth.theta0 + W, noise.sigma)
