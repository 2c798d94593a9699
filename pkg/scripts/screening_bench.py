#!/usr/bin/env python3
"""Measure the effect of strong-rule screening on a wide problem:
per-column gradient evaluations and wall time, screening on vs off, with
a check that both paths coincide."""

import argparse
import time

import numpy as np

from slope import (
    DesignMatrix,
    Family,
    PathConfig,
    SolverConfig,
    fit_normalization,
    fit_path,
    make_lambda,
)
from slope.simulate import make_correlated_design


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--p", type=int, default=2000)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--rho", type=float, default=0.6)
    ap.add_argument("--path-length", type=int, default=30)
    ap.add_argument("--alpha-min-ratio", type=float, default=0.05)
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    X = make_correlated_design(args.n, args.p, rho=args.rho, seed=args.seed)
    beta = np.zeros(args.p)
    sup = rng.choice(args.p, args.k, replace=False)
    beta[sup] = rng.choice([-1.0, 1.0], args.k) * (1 + rng.random(args.k))
    y = X @ beta + rng.standard_normal(args.n)

    norm = fit_normalization(DesignMatrix(X), "mean", "sd")
    fam = Family("gaussian")
    cfg = SolverConfig(tol=args.tol)
    pc = dict(path_length=args.path_length,
              alpha_min_ratio=args.alpha_min_ratio,
              dev_change_tol=0.0, dev_ratio_max=1.0)

    results = {}
    for screening in (True, False):
        Xd = DesignMatrix(X)
        t0 = time.perf_counter()
        res = fit_path(Xd, norm, fam, y, make_lambda("bh", args.p, q=0.2),
                       PathConfig(screening=screening, **pc), cfg)
        dt = time.perf_counter() - t0
        results[screening] = res
        label = "screening on " if screening else "screening off"
        per_step = res.col_evals / len(res) / args.p
        print(f"{label}: {dt:6.1f}s  {res.col_evals:>10} column-gradient evals"
              f"  ({per_step:.1f} x p per step)")

    diff = max(float(np.max(np.abs(a.beta - b.beta)))
               for a, b in zip(results[True].fits, results[False].fits))
    ratio = results[True].col_evals / results[False].col_evals
    print(f"eval ratio on/off: {ratio:.3f}   max |beta| difference: {diff:.2e}")


if __name__ == "__main__":
    main()
