"""Command-line interface: ``slope {fit,path,cv}`` over CSV/libsvm data.

Results are written as versioned JSON (plus optional plot-data CSVs);
all diagnostics go to stderr so ``--output -`` leaves stdout clean.
Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence
under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .clusters import Clusters, pattern_rows
from .cv import CvConfig, cross_validate
from .families import encode_labels
from .matrix import (
    DesignMatrix,
    fit_normalization,
    read_dense_csv,
    read_libsvm,
)
from .path import PathConfig, fit_path, relax_fit
from .solver import SolverConfig, solve
from .sorted_l1 import make_lambda

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(sp):
    sp.add_argument("--data", required=True, help="input table (CSV or libsvm)")
    sp.add_argument("--format", choices=("csv", "libsvm"), default=None,
                    help="input format; default: guessed from the extension")
    sp.add_argument("--no-header", action="store_true",
                    help="CSV file has no header row")
    sp.add_argument("--response", default=None,
                    help="response column (name with header, else 0-based index)")
    sp.add_argument("--response-file", default=None,
                    help="response vector file, one value per line")
    sp.add_argument("--loss", default="gaussian",
                    choices=("gaussian", "binomial", "poisson", "multinomial"))
    sp.add_argument("--lambda", dest="lam_kind", default="bh",
                    choices=("bh", "gaussian", "oscar", "lasso", "custom"))
    sp.add_argument("--lambda-file", default=None,
                    help="custom lambda sequence, one value per line")
    sp.add_argument("--q", default="0.2", help="FDR target(s) for bh/gaussian")
    sp.add_argument("--theta1", type=float, default=None)
    sp.add_argument("--theta2", type=float, default=None)
    sp.add_argument("--center", default="none", choices=("none", "mean", "manual"))
    sp.add_argument("--scale", default="none",
                    choices=("none", "sd", "l1", "l2", "max_abs", "manual"))
    sp.add_argument("--center-file", default=None)
    sp.add_argument("--scale-file", default=None)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--max-iter", type=int, default=10_000)
    sp.add_argument("--cd-maxit", type=int, default=10)
    sp.add_argument("--cd-order", default="random", choices=("random", "cyclic"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--no-intercept", action="store_true")
    sp.add_argument("--strict", action="store_true",
                    help="exit 3 if any fit fails to converge")
    sp.add_argument("--output", default="-", help="output path ('-' = stdout)")


def build_parser():
    parser = _Parser(prog="slope", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="solve at a single alpha")
    _add_common(fit)
    fit.add_argument("--alpha", type=float, required=True)
    fit.add_argument("--gamma", type=float, default=1.0)
    fit.add_argument("--trace", default=None,
                     help="per-iteration CSV of primal/dual/gap")
    fit.add_argument("--pattern", default=None,
                     help="cluster pattern CSV (index, cluster, magnitude, sign)")

    path = subs.add_parser("path", help="fit a regularization path")
    _add_common(path)
    path.add_argument("--path-length", type=int, default=None)
    path.add_argument("--alpha-min-ratio", type=float, default=None)
    path.add_argument("--alphas", default=None,
                      help="file with an explicit alpha grid, one per line")
    path.add_argument("--gamma", type=float, default=1.0)
    path.add_argument("--no-screening", action="store_true")
    path.add_argument("--plot-data", default=None,
                      help="CSV with one row per (step, nonzero coefficient)")

    cv = subs.add_parser("cv", help="cross-validate over (q, gamma, alpha)")
    _add_common(cv)
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--repeats", type=int, default=1)
    cv.add_argument("--gamma", default="1.0", help="comma-separated gamma grid")
    cv.add_argument("--measure", default="mse",
                    choices=("mse", "mae", "deviance", "misclass", "auc"))
    cv.add_argument("--threads", type=int, default=None,
                    help="fold-evaluation threads (env SLOPE_THREADS)")
    cv.add_argument("--path-length", type=int, default=None)
    cv.add_argument("--alpha-min-ratio", type=float, default=None)
    cv.add_argument("--plot-data", default=None,
                    help="CSV of CV curves with lo/hi bands")
    return parser


# -- data loading ------------------------------------------------------------


def _read_vector_file(path):
    try:
        with open(path) as fh:
            return np.array([float(line) for line in fh if line.strip()])
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_problem(args):
    """Returns (DesignMatrix, family, y_encoded, classes, feature names)."""
    fmt = args.format
    if fmt is None:
        fmt = "libsvm" if args.data.endswith((".svm", ".libsvm", ".svmlight")) else "csv"
    try:
        if fmt == "libsvm":
            mat, y_raw = read_libsvm(args.data)
            X = DesignMatrix(mat)
            names = None
        else:
            cells, names = read_dense_csv(args.data, header=not args.no_header)
            y_raw, X, names = _split_csv(args, cells, names)
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None

    try:
        family, y, classes = encode_labels(np.asarray(y_raw), args.loss)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return X, family, y, classes, names


def _split_csv(args, cells, names):
    if args.response_file is not None:
        y_raw = _read_vector_file(args.response_file)
        if len(y_raw) != len(cells):
            raise DataError("response file length does not match data rows")
        x_cells = cells
    else:
        if args.response is None:
            raise UsageError("--response or --response-file is required for CSV data")
        if names is not None and args.response in names:
            rc = names.index(args.response)
        else:
            try:
                rc = int(args.response)
            except ValueError:
                raise DataError(f"response column {args.response!r} not found") from None
            if not 0 <= rc < len(cells[0]):
                raise DataError(f"response index {rc} out of range")
        y_raw = [row[rc] for row in cells]
        x_cells = [row[:rc] + row[rc + 1 :] for row in cells]
        if names is not None:
            names = names[:rc] + names[rc + 1 :]
    try:
        X = DesignMatrix(np.array(x_cells, dtype=np.float64))
    except ValueError:
        raise DataError("non-numeric predictor value in CSV") from None
    return y_raw, X, names


def _build_lambda(args, p_total, n):
    values = None
    kind = args.lam_kind
    if args.lambda_file is not None:
        kind = "custom"
        values = _read_vector_file(args.lambda_file)
        if len(values) != p_total:
            raise DataError(
                f"lambda file has {len(values)} values, need {p_total}")
    q = _parse_floats(args.q)[0]
    try:
        return make_lambda(kind, p_total, q=q, n=n, theta1=args.theta1,
                           theta2=args.theta2, values=values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_floats(text):
    try:
        return [float(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError:
        raise UsageError(f"bad numeric list {text!r}") from None


def _normalization(args, X):
    centers = scales = None
    if args.center == "manual":
        if args.center_file is None:
            raise UsageError("--center manual requires --center-file")
        centers = _read_vector_file(args.center_file)
    if args.scale == "manual":
        if args.scale_file is None:
            raise UsageError("--scale manual requires --scale-file")
        scales = _read_vector_file(args.scale_file)
    try:
        return fit_normalization(X, args.center, args.scale, centers, scales)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _solver_config(args, trace=False):
    return SolverConfig(
        tol=args.tol, max_it=args.max_iter, cd_maxit=args.cd_maxit,
        cd_order=args.cd_order, seed=args.seed,
        intercept=not args.no_intercept, trace=trace)


# -- output ------------------------------------------------------------------


def write_text(path, text):
    """Atomic write: temp file in the target directory, then rename."""
    if path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj):
    return json.dumps(obj, indent=None, separators=(",", ":"),
                      allow_nan=True) + "\n"


def _sparse_beta(fit):
    idx, vals = fit.nonzeros()
    return [[int(i), float(v)] for i, v in zip(idx, vals)]


def _intercept_json(beta0):
    if np.ndim(beta0) == 0:
        return float(beta0)
    return [float(b) for b in np.asarray(beta0).ravel()]


def _fit_json(fit, family, classes):
    out = {
        "alpha": float(fit.alpha),
        "intercept": _intercept_json(fit.beta0),
        "beta": _sparse_beta(fit),
        "primal": float(fit.primal),
        "gap": float(fit.gap),
        "passes": int(fit.passes),
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "deviance": float(fit.deviance),
        "null_deviance": float(fit.null_deviance),
        "deviance_ratio": float(fit.deviance_ratio),
        "n_clusters": int(fit.n_clusters),
    }
    if classes is not None:
        out["classes"] = [str(c) for c in np.asarray(classes).tolist()]
    return out


def _header_json(args, command, X, family):
    return {
        "schema": 1,
        "command": command,
        "family": family.kind,
        "n": int(X.n),
        "p": int(X.p),
        "lambda": {
            "kind": args.lam_kind if args.lambda_file is None else "custom",
            "q": _parse_floats(args.q),
            "theta1": args.theta1,
            "theta2": args.theta2,
        },
        "normalization": {"centering": args.center, "scaling": args.scale},
        "seed": args.seed,
    }


# -- subcommands ---------------------------------------------------------------


def _run_fit(args):
    X, family, y, classes, _ = load_problem(args)
    norm = _normalization(args, X)
    cfg = _solver_config(args, trace=args.trace is not None)
    lam = _build_lambda(args, X.p * family.n_coef_classes, X.n)
    if args.alpha <= 0:
        raise UsageError("--alpha must be positive")
    fit = solve(X, norm, family, y, lam, args.alpha, cfg)
    if args.gamma < 1.0:
        fit = relax_fit(X, norm, family, y, fit, args.gamma, cfg)

    if args.trace is not None:
        lines = ["iteration,primal,dual,gap,step,n_clusters"]
        for row in fit.trace:
            lines.append(
                f"{row['iteration']},{float(row['primal'])!r},"
                f"{float(row['dual'])!r},{float(row['gap'])!r},"
                f"{float(row['step'])!r},{row['n_clusters']}")
        write_text(args.trace, "\n".join(lines) + "\n")
    if args.pattern is not None:
        flat = np.ravel(np.atleast_2d(np.asarray(fit.beta).T).T, order="F")
        rows = pattern_rows(Clusters.from_beta(flat), flat)
        lines = ["coefficient_index,cluster_id,magnitude,sign"]
        lines += [f"{j},{k},{float(mag)!r},{sign}" for j, k, mag, sign in rows]
        write_text(args.pattern, "\n".join(lines) + "\n")

    doc = _header_json(args, "fit", X, family)
    doc.update(_fit_json(fit, family, classes))
    write_text(args.output, _json(doc))
    if args.strict and not fit.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _run_path(args):
    if args.alphas is not None and (args.path_length is not None
                                    or args.alpha_min_ratio is not None):
        raise UsageError("--alphas cannot be combined with --path-length/--alpha-min-ratio")
    X, family, y, classes, _ = load_problem(args)
    norm = _normalization(args, X)
    cfg = _solver_config(args)
    lam = _build_lambda(args, X.p * family.n_coef_classes, X.n)
    alphas = None
    if args.alphas is not None:
        alphas = _read_vector_file(args.alphas)
    pcfg = PathConfig(
        path_length=args.path_length if args.path_length is not None else 100,
        alpha_min_ratio=args.alpha_min_ratio,
        alphas=alphas,
        gamma=args.gamma,
        screening=not args.no_screening)
    res = fit_path(X, norm, family, y, lam, pcfg, cfg)

    doc = _header_json(args, "path", X, family)
    doc["termination"] = res.termination
    doc["alphas"] = [float(a) for a in res.alphas]
    doc["gamma"] = args.gamma
    doc["steps"] = [_fit_json(f, family, classes) for f in res.fits]
    write_text(args.output, _json(doc))

    if args.plot_data is not None:
        lines = ["step,alpha,coefficient_index,value"]
        for step, fit in enumerate(res.fits):
            idx, vals = fit.nonzeros()
            for j, v in zip(idx, vals):
                lines.append(f"{step},{float(fit.alpha)!r},{int(j)},{float(v)!r}")
        write_text(args.plot_data, "\n".join(lines) + "\n")

    if args.strict and any(not f.converged for f in res.fits):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _run_cv(args):
    X, family, y, classes, _ = load_problem(args)
    norm = _normalization(args, X)
    cfg = _solver_config(args)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SLOPE_THREADS", "0")) or (os.cpu_count() or 1)
    cvc = CvConfig(
        n_folds=args.folds, n_repeats=args.repeats,
        q_values=tuple(_parse_floats(args.q)),
        gamma_values=tuple(_parse_floats(args.gamma)),
        measure=args.measure, seed=args.seed, n_threads=threads)
    pcfg = PathConfig(
        path_length=args.path_length if args.path_length is not None else 100,
        alpha_min_ratio=args.alpha_min_ratio)
    try:
        res = cross_validate(X, norm, family, y, cvc, pcfg, cfg,
                             lam_kind=args.lam_kind,
                             theta1=args.theta1, theta2=args.theta2)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    def cell_json(c):
        return {"q": c.q, "gamma": c.gamma, "alpha": c.alpha,
                "measure": args.measure, "mean": c.mean, "se": c.se,
                "lo": c.lo, "hi": c.hi, "n_values": c.n_values}

    doc = _header_json(args, "cv", X, family)
    doc["measure"] = args.measure
    doc["folds"] = args.folds
    doc["repeats"] = args.repeats
    doc["grid"] = [cell_json(c) for c in res.grid]
    doc["optimum"] = cell_json(res.optimum)
    doc["alphas"] = {repr(q): [float(a) for a in al] for q, al in res.alphas.items()}
    doc["skipped_folds"] = res.skipped_folds
    write_text(args.output, _json(doc))

    if args.plot_data is not None:
        lines = ["q,gamma,alpha,mean,se,lo,hi"]
        for c in res.grid:
            lines.append(f"{c.q!r},{c.gamma!r},{c.alpha!r},{c.mean!r},"
                         f"{c.se!r},{c.lo!r},{c.hi!r}")
        write_text(args.plot_data, "\n".join(lines) + "\n")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "fit":
            return _run_fit(args)
        if args.command == "path":
            return _run_path(args)
        return _run_cv(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
