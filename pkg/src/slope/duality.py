"""Dual objective, feasible dual points, and the duality gap.

The primal is P(beta0, beta) = (1/n) sum_i f(eta_i, y_i) + alpha*J(beta).
Its dual, over per-sample multipliers delta (per class for multinomial), is

    D(delta) = (1/n) sum_i [ f(g(delta_i + y_i), y_i)
                             - delta_i . g(delta_i + y_i) ]

subject to sum_i delta_i = 0 (per class, only when an intercept is fit)
and the dual-norm constraint J*_{alpha*lam}((1/n) X^T delta) <= 1, with g
the link function.  A feasible point is built from the generalized
residuals by centering and rescaling.  All terms carry the primal's 1/n
scaling with alpha folded into lambda, so that the gap is zero at an
intercept-only maximum-likelihood fit when alpha >= alpha_max.
"""

from __future__ import annotations

import numpy as np

from .sorted_l1 import dual_norm

_DOMAIN_EPS = 1e-10


def feasible_dual_point(X, norm, r, lam, alpha, intercept=True, grad=None,
                        col_means=None):
    """Center the residuals (when an intercept is fit) and rescale so both
    dual constraints hold.

    Returns (delta, scaled_gradient) where scaled_gradient is
    (1/n) X^T (r - rbar), reused by callers that need it.  Passing ``grad``
    (the uncentered (1/n) X^T r) together with ``col_means`` avoids a second
    pass over the matrix.
    """
    r = np.asarray(r, dtype=np.float64)
    rbar = r.mean(axis=0) if intercept else np.zeros(r.shape[1:])
    rc = r - rbar
    if grad is not None:
        g = grad - np.outer(col_means, np.atleast_1d(rbar)).reshape(grad.shape) \
            if intercept else grad
    else:
        g = X.matvec_t(norm, rc) / X.n
    scale = max(1.0, dual_norm(np.ravel(g, order="F"), lam.values) / alpha)
    return rc / scale, g


def dual_objective(family, delta, y):
    """D(delta) with the loss-side infimum evaluated at g(delta + y).

    Out-of-domain arguments of the link are clamped to the domain edge
    (within 1e-10); gross violations only push the value further down, so
    weak duality is preserved to the tolerance of the clamp.
    """
    delta = np.asarray(delta, dtype=np.float64)
    n = delta.shape[0]
    kind = family.kind
    if kind == "gaussian":
        eta = delta + y
        val = np.sum(0.5 * delta**2 - delta * eta)
    elif kind == "binomial":
        v = np.clip(delta + y, _DOMAIN_EPS, 1.0 - _DOMAIN_EPS)
        eta = np.log(v / (1.0 - v))
        val = np.sum(np.logaddexp(0.0, eta) - eta * y - delta * eta)
    elif kind == "poisson":
        v = np.maximum(delta + y, _DOMAIN_EPS)
        eta = np.log(v)
        val = np.sum(v - eta * y - delta * eta)
    else:  # multinomial, delta and the modeled y columns are (n, m-1)
        if delta.ndim == 1:
            delta = delta[:, None]
        ym = y[:, : delta.shape[1]]
        v = np.clip(delta + ym, _DOMAIN_EPS, 1.0 - _DOMAIN_EPS)
        tot = v.sum(axis=1)
        bad = tot >= 1.0 - _DOMAIN_EPS
        if np.any(bad):
            v = v.copy()
            v[bad] *= ((1.0 - _DOMAIN_EPS) / tot[bad])[:, None]
            v = np.maximum(v, _DOMAIN_EPS)
        ref = 1.0 - v.sum(axis=1)
        eta = np.log(v / ref[:, None])
        lse = -np.log(ref)
        val = np.sum(lse) - np.sum(ym * eta) - np.sum(delta * eta)
    return float(val) / n


def duality_gap(primal, dual):
    """(gap, relative gap); an infeasible dual (-inf) yields +inf."""
    if not np.isfinite(dual):
        return np.inf, np.inf
    gap = primal - dual
    return gap, gap / max(abs(primal), 1e-10)
