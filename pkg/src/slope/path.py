"""Regularization-path fitting: alpha grid, warm starts, strong-rule
screening with a mandatory KKT cleanup loop, early stopping, and the
relaxed (gamma-blended) variant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clusters import Clusters
from .families import gradient as full_gradient
from .matrix import Normalization, as_design_matrix
from .solver import FitResult, SolverConfig, solve
from .sorted_l1 import dual_norm

TERMINATION_REASONS = ("completed", "dev_plateau", "dev_saturated", "cluster_limit")


@dataclass(frozen=True)
class PathConfig:
    path_length: int = 100
    alpha_min_ratio: float | None = None  # 1e-2 if n < p else 1e-4
    alphas: np.ndarray | None = None
    gamma: float = 1.0  # 1 = plain fit, 0 = fully relaxed
    screening: bool = True
    dev_change_tol: float = 1e-5
    dev_ratio_max: float = 0.999
    max_clusters: int | None = None  # default n + 1

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alphas is not None:
            a = np.asarray(self.alphas, dtype=np.float64)
            if np.any(a <= 0) or np.any(np.diff(a) >= 0):
                raise ValueError("explicit alphas must be positive and strictly decreasing")
            object.__setattr__(self, "alphas", a)
        if self.path_length < 1:
            raise ValueError("path_length must be at least 1")


@dataclass
class PathResult:
    fits: list[FitResult]
    alphas: np.ndarray
    deviance_ratios: np.ndarray
    termination: str
    col_evals: int = 0

    def __len__(self):
        return len(self.fits)


def _beta2d(b, p, k):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 1:
        return b.reshape((p, k), order="F") if k > 1 else b[:, None]
    return b


def alpha_max(X, norm, family, y, lam, intercept=True):
    """Smallest alpha at which beta = 0 is optimal: the dual norm of the
    gradient at the intercept-only fit."""
    X = as_design_matrix(X)
    if norm is None:
        norm = Normalization.identity(X.p)
    n = X.n
    K = family.n_coef_classes
    if intercept:
        b0 = np.atleast_1d(np.asarray(family.intercept_mle(y), dtype=np.float64))
    else:
        b0 = np.zeros(K)
    eta = np.broadcast_to(b0, (n, K))
    r = family.residual(eta[:, 0] if K == 1 else eta, y)
    g = X.matvec_t(norm, r) / n
    return dual_norm(np.ravel(g, order="F"), lam.values)


def alpha_grid(amax, length, min_ratio):
    if amax <= 0:
        return np.array([max(amax, 0.0)])
    if length == 1:
        return np.array([amax])
    return np.geomspace(amax, amax * min_ratio, length)


def strong_rule_set(grad_prev, lam_values, alpha_new, alpha_prev):
    """Sequential strong rule: walk |gradient| in decreasing order and keep
    predictors while the running sum of |g|_(k) minus the inflated penalty
    (2*alpha_new - alpha_prev)*lam_k stays non-negative.

    The kept prefix extends to the last non-negative running sum: at a
    solution the sum touches zero exactly at the ends of the active
    cluster blocks and dips below inside them, so stopping at the first
    negative value would truncate the support.
    """
    ag = np.abs(np.ravel(grad_prev, order="F"))
    order = np.argsort(-ag, kind="stable")
    thr = (2.0 * alpha_new - alpha_prev) * lam_values
    run = np.cumsum(ag[order] - thr)
    slack = 1e-10 * alpha_new * np.cumsum(lam_values) + 1e-14
    nonneg = np.flatnonzero(run >= -slack)
    keep = int(nonneg[-1]) + 1 if nonneg.size else 0
    return order[:keep]


def kkt_violations(grad_full_flat, beta_flat, lam_values, alpha, rtol=1e-6):
    """Flat indices outside the support whose gradients break the
    cumulative subdifferential bound for the zero block.

    Zero coefficients occupy the tail positions of the sorted penalty, so
    the sorted gradient prefix sums over them must stay below alpha times
    the matching lambda tail sums.
    """
    zero = np.flatnonzero(beta_flat == 0.0)
    if zero.size == 0:
        return np.empty(0, dtype=np.intp)
    u = np.abs(grad_full_flat[zero])
    order = np.argsort(-u, kind="stable")
    tail = lam_values[beta_flat.size - zero.size :]
    lhs = np.cumsum(u[order])
    rhs = alpha * np.cumsum(tail)
    viol = lhs > rhs * (1.0 + rtol) + 1e-12
    if not np.any(viol):
        return np.empty(0, dtype=np.intp)
    t = int(np.flatnonzero(viol)[-1]) + 1
    return zero[order[:t]]


def _solve_screened(X, norm, family, y, lam, alpha, solver_config, warm,
                    grad_prev, alpha_prev):
    """Solve on a strong-rule working set, then enlarge it until the full
    KKT conditions hold.  Returns (fit on full coordinates, full gradient)."""
    n, p = X.shape
    K = family.n_coef_classes

    warm_beta = np.zeros((p, K))
    warm_b0 = None
    if warm is not None:
        wb, warm_b0 = (warm.beta, warm.beta0) if isinstance(warm, FitResult) \
            else warm
        warm_beta = _beta2d(wb, p, K)

    ws_flat = set(strong_rule_set(grad_prev, lam.values, alpha, alpha_prev).tolist())
    ws_flat.update(np.flatnonzero(np.ravel(warm_beta, order="F")).tolist())
    # screen at predictor granularity: a predictor enters with all classes
    ws_cols = sorted({int(f) % p for f in ws_flat})

    while True:
        if ws_cols:
            cols = np.asarray(ws_cols, dtype=np.intp)
            Xs = X.subset_cols(cols)
            lam_s = lam.truncate(len(cols) * K)
            warm_s = None
            if warm_b0 is not None:
                warm_s = (warm_beta[cols], warm_b0)
            sub = solve(Xs, norm.subset(cols), family, y, lam_s, alpha,
                        solver_config, warm_s)
            beta_full = np.zeros((p, K))
            beta_full[cols] = _beta2d(sub.beta, len(cols), K)
            beta0 = sub.beta0
        else:
            beta_full = np.zeros((p, K))
            beta0 = family.intercept_mle(y) if solver_config.intercept else (
                np.zeros(K) if K > 1 else 0.0)
            sub = None
        g_full, _ = full_gradient(X, norm, family,
                                  beta_full if K > 1 else beta_full[:, 0],
                                  beta0, y)
        if len(ws_cols) == p:  # nothing was excluded, nothing to validate
            break
        viol = kkt_violations(np.ravel(_beta2d(g_full, p, K), order="F"),
                              np.ravel(beta_full, order="F"),
                              lam.values, alpha)
        # flagged zeros already inside the working set reflect the
        # subproblem's own solve tolerance, not a screening miss
        ws = set(ws_cols)
        new_cols = {int(f) % p for f in viol} - ws
        if not new_cols:
            break
        ws.update(new_cols)
        ws_cols = sorted(ws)

    fit = _assemble_full_fit(X, norm, family, y, lam, alpha, solver_config,
                             beta_full, beta0, sub)
    return fit, g_full


def _assemble_full_fit(X, norm, family, y, lam, alpha, solver_config,
                       beta_full, beta0, sub):
    """Full-coordinate FitResult from a screened subproblem fit."""
    K = family.n_coef_classes
    squeeze = family.kind != "multinomial"
    clusters = Clusters.from_beta(np.ravel(beta_full, order="F"))
    eta = X.matvec(norm, beta_full[:, 0] if squeeze else beta_full) + beta0
    loss = family.loss(eta, y)
    primal = loss / X.n + alpha * clusters.penalty(lam.cumsum0)
    return FitResult(
        beta0=beta0, beta=beta_full[:, 0] if squeeze else beta_full,
        alpha=float(alpha), lam=lam, primal=float(primal),
        gap=sub.gap if sub is not None else 0.0,
        passes=sub.passes if sub is not None else 0,
        iterations=sub.iterations if sub is not None else 0,
        converged=sub.converged if sub is not None else True,
        deviance=float(family.deviance(eta, y)),
        null_deviance=float(family.null_deviance(y, intercept=solver_config.intercept)),
        n_clusters=clusters.n_nonzero,
        cluster_arrays=clusters.to_arrays())


def fit_path(X, norm, family, y, lam, path_config=None, solver_config=None):
    """Fit the regularization path over a decreasing alpha grid.

    Steps are warm-started from the previous solution.  The path stops
    early when the deviance ratio saturates (> dev_ratio_max), when its
    fractional gain drops below dev_change_tol (the glmnet convention), or
    when a fit's nonzero-cluster count would exceed max_clusters (that fit
    is not emitted).
    """
    X = as_design_matrix(X)
    if norm is None:
        norm = Normalization.identity(X.p)
    path_config = path_config or PathConfig()
    solver_config = solver_config or SolverConfig()
    n, p = X.shape
    y = family.validate_response(y)

    max_clusters = path_config.max_clusters
    if max_clusters is None:
        max_clusters = n + 1

    amax = alpha_max(X, norm, family, y, lam, solver_config.intercept)
    if path_config.alphas is not None:
        alphas = path_config.alphas
    else:
        ratio = path_config.alpha_min_ratio
        if ratio is None:
            ratio = 1e-2 if n < p else 1e-4
        alphas = alpha_grid(amax, path_config.path_length, ratio)

    col_evals_start = X.counters["col_evals"]
    fits = []
    base_ratios = []  # unrelaxed ratios drive the early-stop rules
    emitted_ratios = []
    termination = "completed"
    warm = None
    grad_prev = None
    alpha_prev = None

    for alpha in alphas:
        alpha = max(float(alpha), 1e-12)
        if path_config.screening and grad_prev is not None:
            fit, grad_prev = _solve_screened(
                X, norm, family, y, lam, alpha, solver_config, warm,
                grad_prev, alpha_prev)
        else:
            fit = solve(X, norm, family, y, lam, alpha, solver_config, warm)
            if path_config.screening:
                grad_prev, _ = full_gradient(X, norm, family, fit.beta,
                                             fit.beta0, y)
        alpha_prev = alpha

        if fit.n_clusters > max_clusters:
            termination = "cluster_limit"
            break

        warm = fit
        base_ratio = fit.deviance_ratio
        emitted = fit
        if path_config.gamma < 1.0:
            emitted = relax_fit(X, norm, family, y, fit, path_config.gamma,
                                solver_config)
        fits.append(emitted)
        base_ratios.append(base_ratio)
        emitted_ratios.append(emitted.deviance_ratio)

        if base_ratio > path_config.dev_ratio_max:
            termination = "dev_saturated"
            break
        if (path_config.dev_change_tol > 0 and len(base_ratios) >= 2
                and base_ratios[-1] - base_ratios[-2]
                < path_config.dev_change_tol * base_ratios[-1]):
            termination = "dev_plateau"
            break

    return PathResult(
        fits=fits,
        alphas=np.asarray([f.alpha for f in fits]),
        deviance_ratios=np.asarray(emitted_ratios),
        termination=termination,
        col_evals=X.counters["col_evals"] - col_evals_start,
    )


def relax_fit(X, norm, family, y, fit, gamma, solver_config=None):
    """Blend a fit with an unpenalized refit on its collapsed clusters.

    The collapsed design has one column per nonzero cluster (the signed
    sum of the member columns); an unpenalized GLM is fit on it by damped
    Newton-IRLS with a 1e-10 ridge jitter, expanded back to the full
    coordinates, and blended: gamma * beta + (1 - gamma) * beta_relaxed.
    When the cluster count reaches n the refit is skipped and the fit is
    returned with ``relax_fallback`` set.
    """
    solver_config = solver_config or SolverConfig()
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 1.0:
        return fit
    X = as_design_matrix(X)
    if norm is None:
        norm = Normalization.identity(X.p)
    n, p = X.shape
    K = family.n_coef_classes
    beta2 = _beta2d(fit.beta, p, K)
    flat = np.ravel(beta2, order="F")

    clusters = Clusters.from_beta(flat)
    nz = [k for k in range(clusters.m) if clusters.magnitude(k) != 0.0]
    m_nz = len(nz)

    if m_nz >= n:
        return replace(fit, relax_fallback=True)

    if m_nz == 0:
        relaxed_beta = np.zeros((p, K), order="F")
        b0 = family.intercept_mle(y) if solver_config.intercept else (
            np.zeros(K) if K > 1 else 0.0)
        relaxed_b0 = np.atleast_1d(np.asarray(b0, dtype=np.float64))
    else:
        U = np.zeros((n, m_nz, K))  # collapsed cluster columns per class
        membership = []
        for col, k in enumerate(nz):
            members = clusters.members(k)
            signs = np.sign(flat[members])
            membership.append((members, signs))
            xt_full = np.zeros((X.storage.shape[0], K))
            const = np.zeros(K)
            for flat_j, s in zip(members, signs):
                j = int(flat_j) % p
                cls = int(flat_j) // p
                X.add_column_raw(j, xt_full[:, cls], s / norm.scales[j])
                const[cls] += s * norm.centers[j] / norm.scales[j]
            U[:, col, :] = (xt_full if X.rows is None else xt_full[X.rows]) - const

        coefs, relaxed_b0 = _newton_glm(U, y, family, solver_config.intercept)
        relaxed_beta = np.zeros((p, K), order="F")
        rflat = relaxed_beta.ravel(order="F")  # view: C/F identical for K=1, F array else
        for col, (members, signs) in enumerate(membership):
            rflat[members] = signs * coefs[col]

    blended_beta = np.asfortranarray(gamma * beta2 + (1.0 - gamma) * relaxed_beta)
    b0_fit = np.atleast_1d(np.asarray(fit.beta0, dtype=np.float64))
    blended_b0 = gamma * b0_fit + (1.0 - gamma) * np.atleast_1d(relaxed_b0)

    squeeze = family.kind != "multinomial"
    eta = X.matvec(norm, blended_beta[:, 0] if squeeze else blended_beta) + (
        blended_b0[0] if squeeze else blended_b0)
    loss = family.loss(eta, y)
    bclusters = Clusters.from_beta(np.ravel(blended_beta, order="F"))
    primal = loss / n + fit.alpha * bclusters.penalty(fit.lam.cumsum0)
    return FitResult(
        beta0=float(blended_b0[0]) if squeeze else blended_b0,
        beta=blended_beta[:, 0] if squeeze else blended_beta,
        alpha=fit.alpha, lam=fit.lam, primal=float(primal), gap=fit.gap,
        passes=fit.passes, iterations=fit.iterations, converged=fit.converged,
        deviance=float(family.deviance(eta, y)),
        null_deviance=fit.null_deviance,
        n_clusters=bclusters.n_nonzero,
        cluster_arrays=bclusters.to_arrays())


def _newton_glm(U, y, family, intercept, max_iter=100, gtol=1e-12):
    """Unpenalized GLM on a small dense design by damped Newton-IRLS.

    U is (n, q, K); one coefficient per collapsed column couples all
    classes.  A 1e-10 ridge jitter keeps singular normal systems solvable.
    """
    n, q, K = U.shape
    coef = np.zeros(q)
    b0 = np.zeros(K)
    if intercept:
        b0 = np.atleast_1d(np.asarray(family.intercept_mle(y), dtype=np.float64))

    def eta_of(c_, b_):
        eta = np.tensordot(U, c_, axes=([1], [0])) + b_  # (n, K)
        return eta[:, 0] if K == 1 else eta

    cur = family.loss(eta_of(coef, b0), y)
    dim = q + (K if intercept else 0)
    for _ in range(max_iter):
        feta = eta_of(coef, b0)
        r = family.residual(feta, y)
        w = family.weights(feta, y)
        r2 = r[:, None] if r.ndim == 1 else r
        w2 = w[:, None] if w.ndim == 1 else w

        grad = np.empty(dim)
        grad[:q] = np.tensordot(U, r2, axes=([0, 2], [0, 1])) / n
        H = np.zeros((dim, dim))
        UW = U * w2[:, None, :]
        H[:q, :q] = np.tensordot(UW, U, axes=([0, 2], [0, 2])) / n
        if intercept:
            grad[q:] = r2.mean(axis=0)
            for c in range(K):
                H[q + c, :q] = H[:q, q + c] = UW[:, :, c].sum(axis=0) / n
                H[q + c, q + c] = w2[:, c].sum() / n
        if np.max(np.abs(grad)) < gtol * (1.0 + abs(cur) / n):
            break
        H[np.diag_indices(dim)] += 1e-10
        step = np.linalg.solve(H, grad)
        damp = 1.0
        new_coef, new_b0, new = coef, b0, cur
        while damp > 1e-12:
            trial_coef = coef - damp * step[:q]
            trial_b0 = b0 - damp * step[q:] if intercept else b0
            trial = family.loss(eta_of(trial_coef, trial_b0), y)
            if trial <= cur + 1e-12 * (1.0 + abs(cur)):
                new_coef, new_b0, new = trial_coef, trial_b0, trial
                break
            damp *= 0.5
        coef, b0 = new_coef, new_b0
        if new >= cur - 1e-14 * (1.0 + abs(cur)):
            break
        cur = new
    return coef, b0
