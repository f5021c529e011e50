"""Compiled coordinate-descent kernels.

Everything in the package that solves an l1-penalized quadratic goes through
:func:`quad_l1_cd`, which minimizes

    0.5 * x' G x - c' x + lam * ||x||_1

by cyclic coordinate descent in ascending coordinate order.  The LASSO uses
``G = X'X/n, c = X'y/n``; a debiasing row uses ``G = X'X/n, c = e_i``; a
nodewise regression freezes coordinate ``i`` at zero and uses ``c = G[:, i]``.
"""

import os

import numpy as np
from numba import config, njit, prange

# probing an outdated system TBB only produces a warning; try it last
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# status codes returned by quad_l1_cd
CONVERGED = 0
MAX_ITER = 1
UNBOUNDED = 2
SKIPPED = 3


@njit(cache=True)
def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def kkt_violation(grad, x, lam, frozen):
    """Max deviation from 0 in the subdifferential of the objective."""
    viol = 0.0
    for j in range(x.shape[0]):
        if frozen[j]:
            continue
        if x[j] > 0.0:
            v = abs(grad[j] + lam)
        elif x[j] < 0.0:
            v = abs(grad[j] - lam)
        else:
            v = abs(grad[j]) - lam
        if v > viol:
            viol = v
    return viol


@njit(cache=True)
def _objective(G, c, lam, x):
    return 0.5 * np.dot(x, G @ x) - np.dot(c, x) + lam * np.sum(np.abs(x))


@njit(cache=True)
def quad_l1_cd(G, c, lam, x, frozen, tol, max_iter, norm_bound, trace):
    """Minimize the l1-penalized quadratic in place, starting from ``x``.

    Stops when the KKT violation is at most ``tol`` (status CONVERGED), after
    ``max_iter`` sweeps (MAX_ITER), or when the last sweep's step ``d`` is a
    descent ray certifying that every solution of the dual box-constrained
    program ``||G m - c||_inf <= lam`` would need ``||m||_1 > norm_bound``
    (UNBOUNDED).  ``trace[k]`` receives the objective after sweep ``k``
    (``trace[0]`` is the starting value); it must hold ``max_iter + 1`` slots
    or be empty.

    Returns ``(status, sweeps, kkt_violation)``.
    """
    p = G.shape[0]
    grad = G @ x - c
    keep_trace = trace.shape[0] > 0
    if keep_trace:
        trace[0] = _objective(G, c, lam, x)
    x_prev = np.empty(p)
    grad_prev = np.empty(p)
    sweeps = 0
    viol = kkt_violation(grad, x, lam, frozen)
    if viol <= tol:
        return CONVERGED, sweeps, viol
    while sweeps < max_iter:
        x_prev[:] = x
        grad_prev[:] = grad
        for j in range(p):
            gjj = G[j, j]
            if frozen[j] or gjj <= 0.0:
                continue
            new = soft_threshold(gjj * x[j] - grad[j], lam) / gjj
            d = new - x[j]
            if d != 0.0:
                x[j] = new
                for k in range(p):
                    grad[k] += d * G[k, j]
        sweeps += 1
        if keep_trace:
            trace[sweeps] = _objective(G, c, lam, x)
        viol = kkt_violation(grad, x, lam, frozen)
        if viol <= tol:
            return CONVERGED, sweeps, viol
        # ray certificate: c'd - lam*||d||_1 > norm_bound * ||G d||_inf
        gain = 0.0
        l1 = 0.0
        gd = 0.0
        for k in range(p):
            dk = x[k] - x_prev[k]
            gain += c[k] * dk
            l1 += abs(dk)
            a = abs(grad[k] - grad_prev[k])
            if a > gd:
                gd = a
        gain -= lam * l1
        if l1 > 0.0 and gain > 0.0 and gain > norm_bound * gd:
            return UNBOUNDED, sweeps, viol
    return MAX_ITER, sweeps, viol


@njit(cache=True, parallel=True)
def debias_rows(G, rows, mu, tol, max_iter, norm_bound, stop_on_failure=False):
    """Solve the debiasing program for each index in ``rows``.

    Rows are independent; each starts from ``e_i / G[i, i]``.  With
    ``stop_on_failure`` the rows not yet started when some row fails are
    marked ``SKIPPED``; which rows those are depends on scheduling, so the
    caller may only use the fact that a failure occurred.
    """
    p = G.shape[0]
    r = rows.shape[0]
    M = np.zeros((r, p))
    status = np.zeros(r, dtype=np.int64)
    sweeps = np.zeros(r, dtype=np.int64)
    viol = np.zeros(r)
    frozen = np.zeros(p, dtype=np.bool_)
    empty = np.empty(0)
    failed = np.zeros(1, dtype=np.bool_)
    for k in prange(r):
        if stop_on_failure and failed[0]:
            status[k] = SKIPPED
        else:
            i = rows[k]
            c = np.zeros(p)
            c[i] = 1.0
            x = np.zeros(p)
            if G[i, i] > 0.0:
                x[i] = 1.0 / G[i, i]
            s, it, v = quad_l1_cd(G, c, mu, x, frozen, tol, max_iter, norm_bound, empty)
            M[k] = x
            status[k] = s
            sweeps[k] = it
            viol[k] = v
            if s != CONVERGED:
                failed[0] = True
    return M, status, sweeps, viol


@njit(cache=True, parallel=True)
def nodewise_rows(G, lams, tol, max_iter):
    """Nodewise LASSO of each column on the others, in Gram form.

    Returns the coefficient matrix (row ``i`` holds gamma_i with a zero at
    ``i``), per-row status and KKT violations.
    """
    p = G.shape[0]
    Gamma = np.zeros((p, p))
    status = np.zeros(p, dtype=np.int64)
    viol = np.zeros(p)
    empty = np.empty(0)
    for i in prange(p):
        frozen = np.zeros(p, dtype=np.bool_)
        frozen[i] = True
        c = G[:, i].copy()
        x = np.zeros(p)
        s, it, v = quad_l1_cd(G, c, lams[i], x, frozen, tol, max_iter, np.inf, empty)
        Gamma[i] = x
        status[i] = s
        viol[i] = v
    return Gamma, status, viol
