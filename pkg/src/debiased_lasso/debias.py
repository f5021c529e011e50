"""Debiasing matrices.

The row program

    minimize   m' S m
    subject to ||S m - e_i||_inf <= mu

is solved through its Lagrange dual, the l1-penalized quadratic
``0.5 m' S m - m_i + mu ||m||_1``: stationarity of the dual gives exactly
``||S m - e_i||_inf <= mu`` and its minimizer is a minimizer of the row
program.  The constraint is re-checked on the returned row.  When ``S`` is
singular and the program is infeasible the dual is unbounded below; the
solver detects the descent ray and reports the row as infeasible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .errors import DegenerateFitError, DimensionError

DEFAULT_MU_CONST = 0.5
DEFAULT_ESCALATION = (1.5, 5)
DEFAULT_BETA = 0.4
# a row whose optimum would need ||m||_1 beyond this is treated as infeasible
NORM_BOUND = 1e6
CERT_TOL = 1e-8
# sweep budget per row inside a full build; a row still unresolved after it is
# treated as infeasible at this mu, which triggers escalation
BUILD_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class SampleCovariance:
    matrix: np.ndarray
    n: int

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def K(self) -> float:
        return float(np.max(np.diag(self.matrix)))


@dataclass(frozen=True)
class DebiasMatrix:
    """Rows ``m_1..m_p`` of the debiasing matrix with their certificates.

    ``achieved_slack[i]`` is ``||S m_i - e_i||_inf`` for the returned row and
    ``feasible[i]`` says whether it is within ``mu_target + 1e-8``.
    ``infeasible_rows`` lists the rows whose program failed at the final
    ``mu_target``; any such row makes the whole matrix fall back to the
    identity.
    """

    M: np.ndarray
    mu_target: float
    achieved_slack: np.ndarray
    feasible: np.ndarray
    fallback_identity: bool
    method: str = "jm"
    mu_initial: Optional[float] = None
    infeasible_rows: Tuple[int, ...] = ()
    xm_inf: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.M.shape[0]


def sample_covariance(X: np.ndarray) -> SampleCovariance:
    """``X'X/n``, symmetrized."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError("X must be a non-empty 2-D array")
    n = X.shape[0]
    S = X.T @ X / n
    return SampleCovariance((S + S.T) / 2, n)


def default_mu(n: int, p: int, a: float = DEFAULT_MU_CONST) -> float:
    """``a * sqrt(log(p) / n)``."""
    if p < 2:
        raise ValueError("default mu needs p >= 2")
    return a * math.sqrt(math.log(p) / n)


def row_slack(S: np.ndarray, m: np.ndarray, i: int) -> float:
    v = S @ m
    v[i] -= 1.0
    return float(np.abs(v).max())


def _check_mu(mu):
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")


def solve_debias_row(sigma_hat: SampleCovariance, i: int, mu: float, tol: float = 1e-9,
                     max_iter: int = 100_000, norm_bound: float = NORM_BOUND):
    """Solve the row program for coordinate ``i`` (0-based).

    Returns ``(m_i, feasible, slack)``.  An infeasible program, or one not
    solved within ``max_iter`` sweeps, gives ``feasible=False`` together with
    the last iterate and its slack.
    """
    _check_mu(mu)
    S = sigma_hat.matrix
    p = S.shape[0]
    if not 0 <= i < p:
        raise IndexError(f"row index {i} out of range for p={p}")
    M, status, _, _ = _kernels.debias_rows(S, np.array([i], dtype=np.int64), float(mu),
                                           float(tol), int(max_iter), float(norm_bound))
    m = M[0]
    slack = row_slack(S, m, i)
    feasible = bool(status[0] == _kernels.CONVERGED and slack <= mu + tol)
    return m, feasible, slack


def _solve_all_rows(S, mu, tol, max_iter, norm_bound, stop_on_failure=False):
    p = S.shape[0]
    M, status, _, _ = _kernels.debias_rows(S, np.arange(p, dtype=np.int64), float(mu),
                                           float(tol), int(max_iter), float(norm_bound),
                                           stop_on_failure)
    V = S @ M.T  # column i is S m_i
    V[np.arange(p), np.arange(p)] -= 1.0
    slack = np.abs(V).max(axis=0)
    ok = (status == _kernels.CONVERGED) & (slack <= mu + tol)
    return M, slack, ok


def _identity_fallback(S, mu, mu0, failed, method):
    p = S.shape[0]
    V = S - np.eye(p)
    slack = np.abs(V).max(axis=0)
    return DebiasMatrix(np.eye(p), float(mu), slack, slack <= mu + CERT_TOL, True, method,
                        mu0, tuple(int(k) for k in failed))


def build_debias_matrix(sigma_hat: SampleCovariance, mu: Optional[float] = None,
                        escalation: Optional[Tuple[float, int]] = DEFAULT_ESCALATION,
                        tol: float = 1e-9, max_iter: int = BUILD_MAX_SWEEPS,
                        norm_bound: float = NORM_BOUND) -> DebiasMatrix:
    """Solve every row program; fall back to ``M = I`` if any row is infeasible.

    Parameters
    ----------
    sigma_hat : SampleCovariance
    mu : float, optional
        Constraint level; defaults to ``0.5 * sqrt(log p / n)``.
    escalation : (factor, max_steps) or None
        Before giving up, retry all rows with ``mu * factor**k`` for
        ``k = 1..max_steps``.  ``None`` disables retries.
    """
    S = sigma_hat.matrix
    p = S.shape[0]
    mu0 = default_mu(sigma_hat.n, p) if mu is None else float(mu)
    _check_mu(mu0)
    factor, steps = (1.0, 0) if escalation is None else escalation
    if escalation is not None and (factor <= 1.0 or steps < 0):
        raise ValueError("escalation needs factor > 1 and max_steps >= 0")
    mu_k = mu0
    for k in range(steps + 1):
        mu_k = mu0 * factor**k
        # a failed row means a retry at larger mu, so the rest need not be solved;
        # the last level is solved in full to report every infeasible row
        M, slack, ok = _solve_all_rows(S, mu_k, tol, max_iter, norm_bound,
                                       stop_on_failure=k < steps)
        if ok.all():
            return DebiasMatrix(M, mu_k, slack, slack <= mu_k + CERT_TOL, False, "jm", mu0)
    failed = np.flatnonzero(~ok)
    warnings.warn(f"debiasing program infeasible for {failed.size} row(s) at mu={mu_k:.4g}; "
                  "using M = I", RuntimeWarning, stacklevel=2)
    return _identity_fallback(S, mu_k, mu0, failed, "jm")


# ---------------------------------------------------------------------------
# variant with an additional bound on ||X m||_inf


class _ADMMSolver:
    """ADMM for  min m'Sm  s.t.  ||S m - e_i||_inf <= mu,  ||X m / sqrt(n)||_inf <= t / sqrt(n).

    Splitting ``A m = z`` with ``A = [S; X/sqrt(n)]`` and ``z`` in the product
    of the two boxes.  The m-step is solved exactly in the eigenbasis of S
    (``A'A = S^2 + S``); components in the null space of S never matter.
    """

    def __init__(self, X: np.ndarray, S: np.ndarray):
        self.X = X
        self.S = S
        self.n = X.shape[0]
        lam, V = np.linalg.eigh(S)
        keep = lam > lam.max() * 1e-12
        self.lam = lam[keep]
        self.V = V[:, keep]

    def solve(self, i, mu, t, m0, tol, max_iter, rho=1.0):
        S, X, V, lam = self.S, self.X, self.V, self.lam
        sqn = math.sqrt(self.n)
        p = S.shape[0]
        lo1 = -mu * np.ones(p)
        hi1 = mu * np.ones(p)
        lo1[i] += 1.0
        hi1[i] += 1.0
        b2 = t / sqn
        m = m0.copy()
        a1, a2 = S @ m, X @ m / sqn
        z1, z2 = np.clip(a1, lo1, hi1), np.clip(a2, -b2, b2)
        u1, u2 = np.zeros(p), np.zeros(self.n)
        for it in range(1, max_iter + 1):
            rhs = rho * (S @ (z1 - u1) + X.T @ (z2 - u2) / sqn)
            m = V @ ((V.T @ rhs) / (2 * lam + rho * (lam**2 + lam)))
            a1, a2 = S @ m, X @ m / sqn
            z1_old, z2_old = z1, z2
            z1 = np.clip(a1 + u1, lo1, hi1)
            z2 = np.clip(a2 + u2, -b2, b2)
            r1, r2 = a1 - z1, a2 - z2
            u1 += r1
            u2 += r2
            prim = max(np.abs(r1).max(), np.abs(r2).max())
            dual = rho * np.linalg.norm(S @ (z1 - z1_old) + X.T @ (z2 - z2_old) / sqn)
            if prim <= tol and dual <= tol:
                return m, it
            if it % 50 == 0:
                # residual balancing; u is the scaled dual so it rescales with rho
                pn = np.linalg.norm(np.concatenate([r1, r2]))
                dn = dual
                if pn > 10 * dn:
                    rho *= 2.0
                    u1 /= 2.0
                    u2 /= 2.0
                elif dn > 10 * pn:
                    rho /= 2.0
                    u1 *= 2.0
                    u2 *= 2.0
        return m, max_iter


def _nongaussian_row(solver_factory, S, X, i, mu, t, m_gauss, tol, max_iter):
    sqn = math.sqrt(X.shape[0])
    solver = solver_factory()
    # aim slightly inside both boxes so the returned row meets the original bounds
    shrink = 1.0 - 1e-6
    m, _ = solver.solve(i, mu * shrink, t * shrink, m_gauss, tol * 1e-2 * min(mu, t / sqn),
                        max_iter)
    slack = row_slack(S, m, i)
    xm = float(np.abs(X @ m).max())
    return m, slack, xm


def solve_debias_row_nongaussian(sigma_hat: SampleCovariance, X: np.ndarray, i: int, mu: float,
                                 beta: float = DEFAULT_BETA, tol: float = 1e-8,
                                 max_iter: int = 20_000):
    """Row program with the extra constraint ``||X m||_inf <= n**beta``.

    Returns ``(m_i, feasible, slack, xm_inf)``.  The unconstrained-in-X row is
    solved first; if it already satisfies the bound it is optimal.  Otherwise
    the full program is solved by ADMM.
    """
    _check_mu(mu)
    if not 0.25 < beta < 0.5:
        raise ValueError(f"beta must lie in (1/4, 1/2), got {beta}")
    X = np.asarray(X, dtype=float)
    S = sigma_hat.matrix
    n = X.shape[0]
    if X.shape[1] != S.shape[0]:
        raise DimensionError("X and sample covariance disagree on p")
    t = n**beta
    m, ok, slack = solve_debias_row(sigma_hat, i, mu, tol=tol)
    xm = float(np.abs(X @ m).max())
    if not ok:
        return m, False, slack, xm
    if xm <= t + tol:
        return m, True, slack, xm
    m, slack, xm = _nongaussian_row(lambda: _ADMMSolver(X, S), S, X, i, mu, t, m, tol, max_iter)
    return m, bool(slack <= mu + tol and xm <= t + tol), slack, xm


def build_debias_matrix_nongaussian(X: np.ndarray, mu: Optional[float] = None,
                                    beta: float = DEFAULT_BETA,
                                    escalation: Optional[Tuple[float, int]] = DEFAULT_ESCALATION,
                                    tol: float = 1e-8, max_iter: int = 20_000) -> DebiasMatrix:
    """Debiasing matrix whose rows also satisfy ``||X m_i||_inf <= n**beta``."""
    if not 0.25 < beta < 0.5:
        raise ValueError(f"beta must lie in (1/4, 1/2), got {beta}")
    X = np.asarray(X, dtype=float)
    sc = sample_covariance(X)
    S = sc.matrix
    n, p = X.shape
    t = n**beta
    mu0 = default_mu(n, p) if mu is None else float(mu)
    _check_mu(mu0)
    factor, steps = (1.0, 0) if escalation is None else escalation
    cache = {}

    def factory():
        if "s" not in cache:
            cache["s"] = _ADMMSolver(X, S)
        return cache["s"]

    mu_k = mu0
    for k in range(steps + 1):
        mu_k = mu0 * factor**k
        M, slack, ok = _solve_all_rows(S, mu_k, tol, BUILD_MAX_SWEEPS, NORM_BOUND,
                                       stop_on_failure=k < steps)
        if k < steps and not ok.all():
            continue
        xm = np.abs(X @ M.T).max(axis=0)
        for i in np.flatnonzero(ok & (xm > t + tol)):
            M[i], slack[i], xm[i] = _nongaussian_row(factory, S, X, i, mu_k, t, M[i], tol,
                                                     max_iter)
        ok &= (slack <= mu_k + tol) & (xm <= t + tol)
        if ok.all():
            return DebiasMatrix(M, mu_k, slack, slack <= mu_k + CERT_TOL, False, "nongaussian",
                                mu0, (), xm)
    failed = np.flatnonzero(~ok)
    warnings.warn(f"non-Gaussian debiasing program infeasible for {failed.size} row(s); "
                  "using M = I", RuntimeWarning, stacklevel=2)
    fb = _identity_fallback(S, mu_k, mu0, failed, "nongaussian")
    return DebiasMatrix(fb.M, fb.mu_target, fb.achieved_slack, fb.feasible, True, "nongaussian",
                        mu0, fb.infeasible_rows, np.abs(X).max(axis=0))


# ---------------------------------------------------------------------------
# nodewise regression (desparsified LASSO / LASSO projection)


def nodewise_lambda(X: np.ndarray) -> np.ndarray:
    """Per-column penalty ``sqrt(2 log p / n) * ||X_j||_2 / sqrt(n)``."""
    n, p = X.shape
    return math.sqrt(2 * math.log(p) / n) * np.linalg.norm(X, axis=0) / math.sqrt(n)


def build_debias_matrix_nodewise(X: np.ndarray,
                                 lambda_node: Union[None, float, Sequence[float]] = None,
                                 tol: float = 1e-10, max_iter: int = 100_000) -> DebiasMatrix:
    """Debiasing matrix from nodewise LASSO regressions.

    Row ``i`` is ``(e_i - gamma_i) / tau_i^2`` where ``gamma_i`` regresses
    column ``i`` on the others at penalty ``lambda_node`` and
    ``tau_i^2 = X_i'(X_i - X_{-i} gamma_i) / n``, so that ``(S m_i)_i = 1``.

    Raises
    ------
    DegenerateFitError
        If a column is zero or some nodewise regression leaves no residual
        (``tau_i^2 ~ 0``).
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p < 2:
        raise DimensionError("nodewise regression needs p >= 2")
    S = sample_covariance(X).matrix
    zero = np.flatnonzero(np.diag(S) <= 0)
    if zero.size:
        raise DegenerateFitError(f"column(s) {zero[:10].tolist()} are identically zero",
                                 stage="debias")
    if lambda_node is None:
        lams = nodewise_lambda(X)
    else:
        lams = np.broadcast_to(np.asarray(lambda_node, dtype=float), (p,)).copy()
    if not np.all(lams > 0):
        raise ValueError("nodewise penalties must be positive")
    Gamma, status, viol = _kernels.nodewise_rows(S, lams, float(tol), int(max_iter))
    if np.any(status != _kernels.CONVERGED):
        bad = np.flatnonzero(status != _kernels.CONVERGED)
        warnings.warn(f"{bad.size} nodewise regression(s) hit max_iter", RuntimeWarning,
                      stacklevel=2)
    tau2 = np.diag(S) - np.einsum("ij,ij->i", Gamma, S)
    scale = np.diag(S)
    bad = np.flatnonzero(tau2 <= 1e-12 * np.maximum(scale, 1e-300))
    if bad.size:
        raise DegenerateFitError(f"nodewise regression has zero residual for column(s) "
                                 f"{bad[:10].tolist()}", stage="debias")
    M = -Gamma
    M[np.arange(p), np.arange(p)] = 1.0
    M /= tau2[:, None]
    V = M @ S - np.eye(p)
    slack = np.abs(V).max(axis=1)
    mu = float(slack.max())
    return DebiasMatrix(M, mu, slack, np.ones(p, dtype=bool), False, "nodewise", None)


def generalized_coherence(sigma_hat: Union[SampleCovariance, np.ndarray], M: np.ndarray) -> float:
    """``|M S - I|_inf``, the largest entrywise deviation of ``M S`` from the identity."""
    S = sigma_hat.matrix if isinstance(sigma_hat, SampleCovariance) else np.asarray(sigma_hat)
    M = np.asarray(M, dtype=float)
    if M.shape != S.shape:
        raise DimensionError(f"M has shape {M.shape}, covariance has {S.shape}")
    return float(np.abs(M @ S - np.eye(S.shape[0])).max())
