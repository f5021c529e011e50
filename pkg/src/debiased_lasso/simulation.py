"""Monte Carlo harness for coverage, interval length and error-rate tables.

For one configuration the support and the design are drawn once from
``seed``; realization ``r`` redraws only the noise, from stream ``seed + r``.
Every realization runs the full pipeline (noise level, LASSO, debiasing,
intervals and tests), and per-coordinate lengths, coverage indicators and
rejections are averaged over realizations.
"""

from __future__ import annotations

import io
import math
import multiprocessing
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .debias import sample_covariance
from .lasso import kkt_violation
from .model import (DESIGN_STREAM, NOISE_STREAM, CovarianceSpec, GaussianNoise, RegressionProblem,
                    cholesky_factor, make_rng, random_support, sample_design)
from .pipeline import PipelineConfig, build_debias, run_pipeline

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CSV_COLUMNS = ("n", "p", "s0", "b", "method", "ell", "ell_S", "ell_Sc", "cov", "cov_S", "cov_Sc",
               "fp", "tp", "status")


class SimulationError(RuntimeError):
    def __init__(self, config: "SimConfig", realization: Optional[int], cause: BaseException):
        where = "design" if realization is None else f"realization {realization}"
        super().__init__(f"{config.label()} failed at {where}: {cause}")
        self.config = config
        self.realization = realization
        self.cause = cause


class SimulationTimeout(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    s0: int
    b: float
    alpha: float = 0.05
    realizations: int = 20
    seed: int = 0
    method: str = "jm"
    sigma: float = 1.0
    redraw_design: bool = False
    covariance: str = "circulant"
    noise_estimator: str = "scaled_lasso"
    mu: Optional[float] = None
    lambda_const: Optional[float] = None
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not 0 <= self.s0 <= self.p:
            raise ValueError(f"need 0 <= s0 <= p, got s0={self.s0}, p={self.p}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.method not in ("jm", "nodewise", "nongaussian"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.covariance not in ("circulant", "identity"):
            raise ValueError(f"unknown covariance {self.covariance!r}")

    def label(self) -> str:
        return f"({self.n},{self.p},{self.s0},{self.b:g}) {self.method}"

    def pipeline_config(self) -> PipelineConfig:
        kw = dict(method=self.method, alpha=self.alpha, mu=self.mu,
                  noise=self.noise_estimator)
        if self.lambda_const is not None:
            kw["lambda_const"] = self.lambda_const
        return PipelineConfig(**kw)

    def covariance_spec(self) -> CovarianceSpec:
        return CovarianceSpec(self.covariance, self.p)


@dataclass(frozen=True)
class SimMetrics:
    """Averages over coordinates and realizations.

    ``tp`` is ``None`` when the support is empty and ``fp`` is ``None``
    when every coordinate is active.  ``max_slack_excess`` is the largest
    ``||S m_i - e_i||_inf - mu`` over rows and designs, and ``max_kkt`` the
    largest LASSO KKT violation over realizations.
    """

    config: SimConfig
    ell: float
    ell_S: Optional[float]
    ell_Sc: Optional[float]
    cov: float
    cov_S: Optional[float]
    cov_Sc: Optional[float]
    fp: Optional[float]
    tp: Optional[float]
    wall_time: float = field(compare=False, default=0.0)
    mu: float = float("nan")
    max_slack_excess: float = float("nan")
    max_kkt: float = float("nan")
    fallback_identity: bool = False
    sigma_hats: tuple = field(default=(), repr=False)
    delta_inf: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class GridRow:
    config: SimConfig
    metrics: Optional[SimMetrics]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.metrics is not None


def _mean(a):
    return float(np.mean(a)) if np.size(a) else None


def run_config(config: SimConfig) -> SimMetrics:
    """Run all realizations of one configuration.

    Raises
    ------
    SimulationError
        If any stage fails; ``realization`` names the failing replication.
    SimulationTimeout
        If ``config.timeout`` seconds elapse; the message reports progress.
    """
    t0 = time.perf_counter()
    n, p = config.n, config.p
    truth = random_support(p, config.s0, config.b, config.seed)
    spec = config.covariance_spec()
    pcfg = config.pipeline_config()
    try:
        chol = None if spec.kind == "identity" else cholesky_factor(spec)
    except Exception as exc:
        raise SimulationError(config, None, exc) from exc
    noise = GaussianNoise(config.sigma)

    lengths = np.zeros(p)
    covered = np.zeros(p)
    rejected = np.zeros(p)
    sigma_hats, delta_inf = [], []
    max_excess = -np.inf
    max_kkt = 0.0
    fallback = False
    mu = float("nan")

    X = cov = dm = None
    for r in range(config.realizations):
        try:
            if X is None or config.redraw_design:
                dseed = config.seed + r if config.redraw_design else config.seed
                X = sample_design(spec, n, make_rng(dseed, DESIGN_STREAM), chol)
                cov = sample_covariance(X)
                dm = build_debias(X, pcfg, cov)
                mu = dm.mu_target
                fallback = fallback or dm.fallback_identity
                if not dm.fallback_identity:
                    max_excess = max(max_excess, float(np.max(dm.achieved_slack - dm.mu_target)))
            W = noise.draw(make_rng(config.seed + r, NOISE_STREAM), n)
            problem = RegressionProblem(X, X @ truth.theta0 + W, config.sigma)
            res = run_pipeline(problem, pcfg, dm, cov)
        except Exception as exc:
            raise SimulationError(config, r, exc) from exc
        rep = res.report
        lengths += rep.ci_upper - rep.ci_lower
        covered += (rep.ci_lower <= truth.theta0) & (truth.theta0 <= rep.ci_upper)
        rejected += rep.reject
        sigma_hats.append(res.noise.sigma_hat)
        # recomputed from the residual rather than taken from the solver
        max_kkt = max(max_kkt, kkt_violation(problem, res.fit.theta_hat, res.fit.lam))
        delta = math.sqrt(n) * (dm.M @ cov.matrix - np.eye(p)) @ (truth.theta0 - res.fit.theta_hat)
        delta_inf.append(float(np.abs(delta).max()))
        if config.timeout is not None and time.perf_counter() - t0 > config.timeout:
            raise SimulationTimeout(config, r, TimeoutError(
                f"exceeded {config.timeout:g}s after {r + 1}/{config.realizations} realizations"))

    R = config.realizations
    S = truth.support
    Sc = np.setdiff1d(np.arange(p), S)
    avg_len = lengths / R
    cov_rate = covered / R
    rej_rate = rejected / R
    return SimMetrics(
        config,
        ell=float(avg_len.mean()), ell_S=_mean(avg_len[S]), ell_Sc=_mean(avg_len[Sc]),
        cov=float(cov_rate.mean()), cov_S=_mean(cov_rate[S]), cov_Sc=_mean(cov_rate[Sc]),
        fp=_mean(rej_rate[Sc]), tp=_mean(rej_rate[S]),
        wall_time=time.perf_counter() - t0, mu=mu,
        max_slack_excess=float(max_excess) if np.isfinite(max_excess) else float("nan"),
        max_kkt=float(max_kkt), fallback_identity=fallback,
        sigma_hats=tuple(sigma_hats), delta_inf=tuple(delta_inf))


def _run_row(config: SimConfig) -> GridRow:
    try:
        return GridRow(config, run_config(config))
    except SimulationError as exc:
        return GridRow(config, None, str(exc))


def run_grid(configs: Sequence[SimConfig], workers: int = 1) -> List[GridRow]:
    """Run configurations, optionally in worker processes.

    Results come back in input order and do not depend on ``workers``.  A
    failing configuration is reported in its row; the others still run.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("empty configuration grid")
    if workers <= 1 or len(configs) == 1:
        return [_run_row(c) for c in configs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, len(configs)), mp_context=ctx) as pool:
        return list(pool.map(_run_row, configs))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def grid_csv(rows: Sequence[GridRow]) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        c, m = row.config, row.metrics
        vals = [c.n, c.p, c.s0, float(c.b), c.method]
        if m is None:
            vals += [None] * 8 + ["failed"]
        else:
            vals += [m.ell, m.ell_S, m.ell_Sc, m.cov, m.cov_S, m.cov_Sc, m.fp, m.tp, "ok"]
        out.write(",".join(_fmt(v) for v in vals) + "\n")
    return out.getvalue()


def grid_text(rows: Sequence[GridRow]) -> str:
    """Aligned plain-text table; failed rows carry their error message."""
    head = ["configuration", "method", "ell", "ell_S", "ell_Sc", "cov", "cov_S", "cov_Sc",
            "FP", "TP"]
    cells, errors = [], []
    for row in rows:
        c, m = row.config, row.metrics
        cfg = [f"({c.n},{c.p},{c.s0},{c.b:g})", c.method]
        if m is None:
            cells.append(cfg + [""] * 8)
            errors.append("FAILED: " + (row.error or ""))
            continue
        cells.append(cfg + ["-" if v is None else f"{v:.4f}" for v in
                            (m.ell, m.ell_S, m.ell_Sc, m.cov, m.cov_S, m.cov_Sc, m.fp, m.tp)])
        errors.append(None)
    widths = [max(len(r[j]) for r in [head] + cells) for j in range(len(head))]

    def fmt(r):
        return "  ".join(v.ljust(w) if j < 2 else v.rjust(w)
                         for j, (v, w) in enumerate(zip(r, widths)))

    lines = [fmt(head), "  ".join("-" * w for w in widths)]
    for r, err in zip(cells, errors):
        lines.append(fmt(r[:2] + [""] * 8).rstrip() + "  " + err if err else fmt(r))
    return "\n".join(lines) + "\n"


def write_grid(rows: Sequence[GridRow], out_dir: Union[str, Path]) -> tuple:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out_dir / "results.csv", out_dir / "results.txt"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(grid_csv(rows))
    with open(txt_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(grid_text(rows))
    return csv_path, txt_path


_CONFIG_FIELDS = {f.name for f in fields(SimConfig)}


def load_grid(path: Union[str, Path], method: Optional[str] = None) -> List[SimConfig]:
    """Parse a TOML grid file.

    An optional ``[defaults]`` table supplies shared settings and each
    ``[[config]]`` table one configuration::

        [defaults]
        realizations = 20
        seed = 2014

        [[config]]
        n = 1000
        p = 600
        s0 = 10
        b = 0.5

    ``method``, when given, overrides every configuration's method.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    defaults = doc.get("defaults", {})
    tables = doc.get("config", [])
    if not isinstance(tables, list) or not tables:
        raise ValueError("grid file has no [[config]] tables")
    configs = []
    for k, table in enumerate(tables):
        merged = {**defaults, **table}
        unknown = set(merged) - _CONFIG_FIELDS
        if unknown:
            raise ValueError(f"config {k}: unknown keys {sorted(unknown)}")
        if method is not None:
            merged["method"] = method
        configs.append(SimConfig(**merged))
    return configs


STANDARD_GRID = [(1000, 600, 10, 0.5), (1000, 600, 10, 0.25), (1000, 600, 10, 0.1),
              (1000, 600, 30, 0.5), (1000, 600, 30, 0.25), (1000, 600, 30, 0.1)]


def standard_grid(method: str = "jm", realizations: int = 20, seed: int = 0, alpha: float = 0.05):
    """Six (n, p, s0, b) configurations with n = 1000, p = 600 and a circulant design."""
    return [SimConfig(n, p, s0, b, alpha=alpha, realizations=realizations, seed=seed,
                      method=method) for n, p, s0, b in STANDARD_GRID]
