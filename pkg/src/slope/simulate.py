"""Synthetic regression problems for tests and the example scripts."""

from __future__ import annotations

import numpy as np


def make_correlated_design(n, p, rho=0.5, seed=0, density=1.0):
    """Design with AR(1) correlation rho between adjacent predictors.

    With density < 1 entries are thinned to produce a sparse-like matrix
    (returned dense; wrap in scipy if sparsity is wanted).
    """
    rng = np.random.default_rng(seed)
    X = np.empty((n, p))
    X[:, 0] = rng.standard_normal(n)
    scale = np.sqrt(1.0 - rho**2)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + scale * rng.standard_normal(n)
    if density < 1.0:
        mask = rng.random((n, p)) < density
        X = X * mask
    return X


def make_regression(n, p, k=5, rho=0.5, snr=3.0, seed=0, kind="gaussian",
                    m_classes=3):
    """(X, y, beta_true) with k nonzero coefficients and AR(1) predictors."""
    rng = np.random.default_rng(seed + 1)
    X = make_correlated_design(n, p, rho=rho, seed=seed)
    beta = np.zeros(p)
    support = rng.choice(p, size=min(k, p), replace=False)
    beta[support] = rng.choice([-1.0, 1.0], size=support.size) * (
        1.0 + rng.random(support.size))
    eta = X @ beta
    if kind == "gaussian":
        sigma = np.sqrt(np.var(eta) / snr) if np.var(eta) > 0 else 1.0
        y = eta + rng.standard_normal(n) * sigma
    elif kind == "binomial":
        prob = 1.0 / (1.0 + np.exp(-eta))
        y = (rng.random(n) < prob).astype(float)
    elif kind == "poisson":
        lam = np.exp(np.clip(eta / max(np.abs(eta).max(), 1.0) * 2.0, -20, 20))
        y = rng.poisson(lam).astype(float)
    elif kind == "multinomial":
        B = np.zeros((p, m_classes - 1))
        for c in range(m_classes - 1):
            sup = rng.choice(p, size=min(k, p), replace=False)
            B[sup, c] = rng.choice([-1.0, 1.0], size=sup.size)
        etas = X @ B
        z = np.hstack([etas, np.zeros((n, 1))])
        z -= z.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        labels = np.array([rng.choice(m_classes, p=pr) for pr in probs])
        return X, labels, B
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return X, y, beta
