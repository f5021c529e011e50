"""Command-line interface.

Exit codes: 0 success, 2 usage or malformed input, 3 dimension mismatch,
4 numerical failure, 5 failed simulation rows.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceError, DegenerateFitError, DimensionError, FactorizationError
from .model import RegressionProblem
from .pipeline import PipelineConfig, run_pipeline
from .serialize import (DataFormatError, ReportFormatError, format_float, load_dataset,
                        read_report, write_report)
from .simulation import load_grid, run_grid, write_grid

EXIT_OK, EXIT_USAGE, EXIT_DIMENSION, EXIT_NUMERIC, EXIT_SIMULATION = 0, 2, 3, 4, 5


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return a


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _beta(text: str) -> float:
    b = _positive(text)
    if not 0.25 < b < 0.5:
        raise argparse.ArgumentTypeError(f"beta must lie in (1/4, 1/2), got {text}")
    return b


def _count(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debiased-lasso",
                                     description="Debiased LASSO inference for sparse regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    inf = sub.add_parser("infer", help="confidence intervals and p-values for a dataset")
    inf.add_argument("--x", required=True, type=Path, help="design CSV, optional header row")
    ysrc = inf.add_mutually_exclusive_group(required=True)
    ysrc.add_argument("--y", type=Path, help="single-column response CSV")
    ysrc.add_argument("--y-col", help="name of the response column in the --x file")
    inf.add_argument("--alpha", type=_alpha, default=0.05)
    inf.add_argument("--method", choices=("jm", "nodewise", "nongaussian"), default="jm")
    inf.add_argument("--mu", type=_positive, help="debiasing constraint level")
    inf.add_argument("--lambda", dest="lam", type=_positive, help="LASSO penalty")
    inf.add_argument("--beta", type=_beta, default=0.4,
                     help="exponent of the ||Xm||_inf <= n^beta bound (nongaussian)")
    inf.add_argument("--center", action=argparse.BooleanOptionalAction, default=True,
                     help="center Y and the columns of X (default on)")
    inf.add_argument("--out", required=True, type=Path)
    inf.add_argument("--format", choices=("json", "csv"), default="json")
    inf.add_argument("--seed", type=int, default=0,
                     help="accepted for reproducible scripts; the pipeline draws no randomness")

    sim = sub.add_parser("simulate", help="Monte Carlo coverage and error-rate table")
    sim.add_argument("--grid", required=True, type=Path, help="TOML grid file")
    sim.add_argument("--out", required=True, type=Path, help="output directory")
    sim.add_argument("--workers", type=_count, default=1)
    sim.add_argument("--method", choices=("jm", "nodewise"),
                     help="override the method of every configuration")

    plot = sub.add_parser("plotdata", help="Manhattan or forest plot data from a report")
    plot.add_argument("--report", required=True, type=Path)
    plot.add_argument("--kind", choices=("manhattan", "forest"), required=True)
    plot.add_argument("--top", type=_count, default=10)
    plot.add_argument("--out", required=True, type=Path)
    return parser


def cmd_infer(args) -> int:
    try:
        data = load_dataset(args.x, args.y, args.y_col)
    except DimensionError as exc:
        raise _Fail(EXIT_DIMENSION, str(exc)) from None
    except (OSError, DataFormatError) as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from None
    X, Y = data.X, data.Y
    if args.center:
        X = X - X.mean(axis=0)
        Y = Y - Y.mean()
    try:
        problem = RegressionProblem(X, Y)
    except DimensionError as exc:
        raise _Fail(EXIT_DIMENSION, str(exc)) from None
    config = PipelineConfig(method=args.method, alpha=args.alpha, mu=args.mu, lam=args.lam,
                            beta=args.beta)
    try:
        result = run_pipeline(problem, config, names=data.names)
    except ConvergenceError as exc:
        raise _Fail(EXIT_NUMERIC, f"numerical failure in stage '{exc.stage}': {exc}") from None
    except DegenerateFitError as exc:
        raise _Fail(EXIT_NUMERIC, f"numerical failure in stage '{exc.stage}': {exc}") from None
    except (FactorizationError, np.linalg.LinAlgError) as exc:
        raise _Fail(EXIT_NUMERIC, f"numerical failure in stage 'debias': {exc}") from None
    except DimensionError as exc:
        raise _Fail(EXIT_DIMENSION, str(exc)) from None
    rep = result.report
    write_report(rep, args.out, args.format)
    print(f"n={problem.n} p={problem.p} method={args.method} sigma_hat={rep.sigma_hat:.6g} "
          f"rejections: {int(rep.reject.sum())} at alpha={args.alpha:g}, "
          f"{int(rep.reject_fwer.sum())} at alpha/p={args.alpha / problem.p:.3g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        configs = load_grid(args.grid, args.method)
    except OSError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from None
    except (ValueError, TypeError) as exc:
        raise _Fail(EXIT_USAGE, f"{args.grid}: {exc}") from None
    rows = run_grid(configs, args.workers)
    csv_path, txt_path = write_grid(rows, args.out)
    failed = [r for r in rows if not r.ok]
    print(f"{len(rows) - len(failed)}/{len(rows)} configurations completed; "
          f"wrote {csv_path} and {txt_path}")
    if failed:
        for r in failed:
            print(f"FAILED {r.error}", file=sys.stderr)
        return EXIT_SIMULATION
    return EXIT_OK


def _neg_log10(p: float) -> str:
    if p <= 0:
        return "inf"
    return format_float(-math.log10(p) + 0.0)


def cmd_plotdata(args) -> int:
    try:
        rep = read_report(args.report)
    except OSError as exc:
        raise _Fail(EXIT_USAGE, str(exc)) from None
    except ReportFormatError as exc:
        raise _Fail(EXIT_USAGE, f"{args.report}: malformed report: {exc}") from None
    names = rep.coord_names()
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if args.kind == "manhattan":
            thr = format_float(-math.log10(rep.alpha / rep.p))
            w.writerow(("index", "name", "neg_log10_p", "bonferroni_threshold"))
            for i in range(rep.p):
                w.writerow((i, names[i], _neg_log10(rep.p_value[i]), thr))
        else:
            # NaN p-values sort last
            key = np.where(np.isnan(rep.p_value), np.inf, rep.p_value)
            order = np.lexsort((np.arange(rep.p), key))[:args.top]
            w.writerow(("index", "name", "estimate", "ci_lower", "ci_upper", "p_value"))
            for i in order:
                w.writerow((int(i), names[i]) + tuple(format_float(a[i]) for a in (
                    rep.estimate, rep.ci_lower, rep.ci_upper, rep.p_value)))
    return EXIT_OK


_COMMANDS = {"infer": cmd_infer, "simulate": cmd_simulate, "plotdata": cmd_plotdata}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
