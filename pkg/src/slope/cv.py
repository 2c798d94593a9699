"""Repeated k-fold cross-validation over a (q, gamma, alpha) grid.

Folds are drawn by a seeded shuffle (stratified by class for the
classification families).  The alpha grid for each q is fixed from the
full-data fit so curves are comparable across folds.  Per-fold work runs
on row views of the shared design matrix; evaluations can be spread over
a thread pool, with aggregation done in a fixed order so results are
identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .families import Family
from .matrix import Normalization, as_design_matrix, fit_normalization
from .path import PathConfig, alpha_grid, alpha_max, fit_path, relax_fit
from .solver import SolverConfig

MEASURES = ("mse", "mae", "deviance", "misclass", "auc")
Z_95 = 1.96  # half-width multiplier for the 95% band


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 10
    n_repeats: int = 1
    q_values: tuple = (0.2,)
    gamma_values: tuple = (1.0,)
    measure: str = "mse"
    seed: int = 0
    n_threads: int = 1

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("need at least 2 folds")
        if self.n_repeats < 1:
            raise ValueError("need at least 1 repeat")
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        object.__setattr__(self, "q_values", tuple(self.q_values))
        object.__setattr__(self, "gamma_values", tuple(self.gamma_values))


@dataclass
class CvCell:
    q: float
    gamma: float
    alpha: float
    mean: float
    se: float
    lo: float
    hi: float
    n_values: int


@dataclass
class CvResult:
    grid: list[CvCell]
    optimum: CvCell
    alphas: dict  # q -> alpha grid
    measure: str
    skipped_folds: int = 0
    fold_values: dict = field(default_factory=dict)  # (q, gamma, alpha_idx) -> values


def evaluate_measure(measure, predictions, y, family):
    """Score response-scale predictions against held-out responses."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if measure == "mse":
        if family.kind == "multinomial":
            raise ValueError("mse is not defined for multinomial responses")
        return float(np.mean((predictions - y) ** 2))
    if measure == "mae":
        if family.kind == "multinomial":
            raise ValueError("mae is not defined for multinomial responses")
        return float(np.mean(np.abs(predictions - y)))
    if measure == "deviance":
        eta = _response_to_eta(predictions, family)
        return family.deviance(eta, y) / y.shape[0]
    if measure == "misclass":
        if family.kind == "binomial":
            return float(np.mean((predictions >= 0.5) != (y == 1)))
        if family.kind == "multinomial":
            pred_class = predictions.argmax(axis=1)
            true_class = np.asarray(y).argmax(axis=1)
            return float(np.mean(pred_class != true_class))
        raise ValueError("misclass requires a classification family")
    if measure == "auc":
        if family.kind != "binomial":
            raise ValueError("auc requires the binomial family")
        pos = y == 1
        n_pos = int(pos.sum())
        n_neg = y.shape[0] - n_pos
        if n_pos == 0 or n_neg == 0:
            raise ValueError("auc undefined for single-class data")
        ranks = rankdata(predictions)  # tie-averaged ranks
        return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0)
                     / (n_pos * n_neg))
    raise ValueError(f"unknown measure {measure!r}")


def _response_to_eta(mu, family):
    """Invert the mean back to the linear predictor for deviance scoring."""
    if family.kind == "gaussian":
        return mu
    if family.kind == "binomial":
        m = np.clip(mu, 1e-12, 1 - 1e-12)
        return np.log(m / (1 - m))
    if family.kind == "poisson":
        return np.log(np.clip(mu, 1e-12, None))
    m = np.clip(mu, 1e-12, 1.0)
    return np.log(m[:, :-1] / m[:, -1:])


def _make_folds(y, family, n_folds, rng):
    """Fold assignment per sample; stratified for classification."""
    n = y.shape[0]
    assign = np.empty(n, dtype=np.intp)
    if family.kind in ("binomial", "multinomial"):
        labels = y if y.ndim == 1 else y.argmax(axis=1)
        for lab in np.unique(labels):
            idx = np.flatnonzero(labels == lab)
            idx = idx[rng.permutation(idx.size)]
            assign[idx] = np.arange(idx.size) % n_folds
    else:
        perm = rng.permutation(n)
        assign[perm] = np.arange(n) % n_folds
    return assign


def _fold_job(X, y, family, lam_builder, q, alphas, gamma_values, train, test,
              measure, solver_config, centering, scaling):
    """Fit a path on the training rows and score every (gamma, alpha) cell
    on the held-out rows.  Returns {(gamma, alpha_idx): value or None}."""
    Xtr = X.subset_rows(train)
    Xte = X.subset_rows(test)
    ytr = y[train]
    yte = y[test]
    norm = fit_normalization(Xtr, centering, scaling)
    lam = lam_builder(q, Xtr.n)
    pcfg = PathConfig(alphas=alphas, screening=True, gamma=1.0,
                      dev_change_tol=0.0, dev_ratio_max=1.0,
                      max_clusters=10**9)  # score every alpha in every fold
    res = fit_path(Xtr, norm, family, ytr, lam, pcfg, solver_config)

    out = {}
    relaxed_cache = {}
    for ia, fit in enumerate(res.fits):
        for gamma in gamma_values:
            if gamma < 1.0:
                if ia not in relaxed_cache:
                    relaxed_cache[ia] = relax_fit(Xtr, norm, family, ytr,
                                                  fit, 0.0, solver_config)
                relaxed = relaxed_cache[ia]
                beta = gamma * np.asarray(fit.beta) + (1 - gamma) * np.asarray(relaxed.beta)
                beta0 = gamma * np.asarray(fit.beta0) + (1 - gamma) * np.asarray(relaxed.beta0)
            else:
                beta, beta0 = fit.beta, fit.beta0
            eta = Xte.matvec(norm, beta) + beta0
            mu = family.mean(eta)
            try:
                val = evaluate_measure(measure, mu, yte, family)
            except ValueError:
                val = None  # e.g. single-class fold under auc
            out[(gamma, ia)] = val
    return out


def cross_validate(X, norm, family, y, cv_config=None, path_config=None,
                   solver_config=None, lam_kind="bh", theta1=None, theta2=None):
    """Iterated k-fold cross-validation over (q, gamma, alpha).

    ``norm`` only communicates the centering/scaling *modes*; per-fold
    centers and scales are refit on the training rows.  Returns a CvResult
    with one cell per grid point and the optimum (min mean, max for auc).
    """
    from .sorted_l1 import make_lambda

    X = as_design_matrix(X)
    cv_config = cv_config or CvConfig()
    path_config = path_config or PathConfig()
    solver_config = solver_config or SolverConfig()
    n, p = X.shape
    if cv_config.n_folds > n:
        raise ValueError("more folds than samples")
    if cv_config.measure in ("auc", "misclass") and family.kind not in (
            "binomial", "multinomial"):
        raise ValueError(f"{cv_config.measure} requires a classification family")
    y = family.validate_response(y)
    K = family.n_coef_classes
    centering = norm.centering if norm is not None else "none"
    scaling = norm.scaling if norm is not None else "none"

    def lam_builder(q, n_train):
        return make_lambda(lam_kind, p * K, q=q, n=n_train,
                           theta1=theta1, theta2=theta2)

    # one alpha grid per q, fixed on the full data
    ratio = path_config.alpha_min_ratio
    if ratio is None:
        ratio = 1e-2 if n < p else 1e-4
    alphas_by_q = {}
    full_norm = fit_normalization(X, centering, scaling)
    for q in cv_config.q_values:
        lam = lam_builder(q, n)
        amax = alpha_max(X, full_norm, family, y, lam, solver_config.intercept)
        alphas_by_q[q] = alpha_grid(amax, path_config.path_length, ratio)

    # fold assignments for every repeat, fixed up front for determinism
    rng = np.random.default_rng(cv_config.seed)
    assignments = [_make_folds(y, family, cv_config.n_folds, rng)
                   for _ in range(cv_config.n_repeats)]

    jobs = []
    for q in cv_config.q_values:
        for rep in range(cv_config.n_repeats):
            assign = assignments[rep]
            for fold in range(cv_config.n_folds):
                test = np.flatnonzero(assign == fold)
                train = np.flatnonzero(assign != fold)
                if test.size == 0:
                    continue
                jobs.append((q, rep, fold, train, test))

    def run(job):
        q, rep, fold, train, test = job
        return _fold_job(X, y, family, lam_builder, q, alphas_by_q[q],
                         cv_config.gamma_values, train, test,
                         cv_config.measure, solver_config, centering, scaling)

    if cv_config.n_threads > 1:
        with ThreadPoolExecutor(max_workers=cv_config.n_threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    # deterministic ordered reduction
    values = {}
    skipped = 0
    for job, res in zip(jobs, results):
        q = job[0]
        for (gamma, ia), val in res.items():
            key = (q, gamma, ia)
            if val is None:
                skipped += 1
                continue
            values.setdefault(key, []).append(val)

    grid = []
    for q in cv_config.q_values:
        for gamma in cv_config.gamma_values:
            for ia, alpha in enumerate(alphas_by_q[q]):
                vals = values.get((q, gamma, ia), [])
                if not vals:
                    continue
                arr = np.asarray(vals)
                mean = float(arr.mean())
                se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
                grid.append(CvCell(q=q, gamma=gamma, alpha=float(alpha),
                                   mean=mean, se=se,
                                   lo=mean - Z_95 * se, hi=mean + Z_95 * se,
                                   n_values=arr.size))

    if not grid:
        raise ValueError("cross-validation produced no scored cells")
    pick = max if cv_config.measure == "auc" else min
    optimum = pick(grid, key=lambda c: (c.mean, c.alpha))
    return CvResult(grid=grid, optimum=optimum,
                    alphas={q: alphas_by_q[q] for q in cv_config.q_values},
                    measure=cv_config.measure, skipped_folds=skipped,
                    fold_values={k: list(v) for k, v in values.items()})
