"""GLM loss families: losses, links, generalized residuals, IRLS weights.

All losses are negative log-likelihoods in the linear predictor eta, so
the generalized residual r = dloss/deta = mean(eta) - y and the IRLS
weight w = d2loss/deta2.  The multinomial family uses the non-redundant
parameterization: m - 1 modeled classes, last class implicit, which makes
the binary case coincide with the binomial family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, xlogy

FAMILY_KINDS = ("gaussian", "binomial", "poisson", "multinomial")

ETA_CLAMP = 500.0  # exp() guard; loss formulas overflow naively
WEIGHT_FLOOR = 1e-10  # keeps working responses finite near saturation
PROB_CLAMP = 1e-9  # intercept-only MLE guard for degenerate responses


def _exp(eta):
    return np.exp(np.clip(eta, -ETA_CLAMP, ETA_CLAMP))


def _softplus(eta):
    return np.logaddexp(0.0, eta)


def _eta2d(eta):
    return eta[:, None] if eta.ndim == 1 else eta


def _multinomial_lse(eta):
    """log(1 + sum_j exp(eta_j)) row-wise, stable."""
    hi = np.maximum(eta.max(axis=1), 0.0)
    return hi + np.log(np.exp(-hi) + np.exp(eta - hi[:, None]).sum(axis=1))


def _multinomial_probs(eta):
    """Modeled-class probabilities exp(eta_k) / (1 + sum_j exp(eta_j))."""
    lse = _multinomial_lse(eta)
    return np.exp(eta - lse[:, None])


@dataclass(frozen=True)
class Family:
    """A loss family plus its class count (1 unless multinomial)."""

    kind: str
    m: int = 1

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family {self.kind!r}")
        if self.kind == "multinomial" and self.m < 2:
            raise ValueError("multinomial requires at least 2 classes")
        if self.kind != "multinomial" and self.m != 1:
            raise ValueError(f"{self.kind} is univariate (m must be 1)")

    @property
    def n_coef_classes(self):
        """Number of linear predictors per sample."""
        return self.m - 1 if self.kind == "multinomial" else 1

    # -- response handling --------------------------------------------------

    def validate_response(self, y):
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "multinomial":
            if y.ndim != 2 or y.shape[1] != self.m:
                raise ValueError("multinomial response must be one-hot (n, m)")
            if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
                raise ValueError("multinomial response rows must be one-hot")
            return y
        if y.ndim != 1:
            raise ValueError("response must be one-dimensional")
        if self.kind == "binomial" and not np.all((y == 0) | (y == 1)):
            raise ValueError("binomial response must contain only 0 and 1")
        if self.kind == "poisson" and np.any(y < 0):
            raise ValueError("poisson response must be non-negative")
        return y

    # -- loss and derivatives ------------------------------------------------

    def loss(self, eta, y):
        """Total loss sum_i f(eta_i, y_i)."""
        if self.kind == "gaussian":
            return 0.5 * np.sum((y - eta) ** 2)
        if self.kind == "binomial":
            return np.sum(_softplus(eta) - eta * y)
        if self.kind == "poisson":
            return np.sum(_exp(eta) - eta * y)
        eta = _eta2d(eta)
        lse = _multinomial_lse(eta)
        return np.sum(lse) - np.sum(y[:, : eta.shape[1]] * eta)

    def residual(self, eta, y):
        """Generalized residual r = inverse_link(eta) - y = dloss/deta."""
        if self.kind == "gaussian":
            return eta - y
        if self.kind == "binomial":
            return expit(eta) - y
        if self.kind == "poisson":
            return _exp(eta) - y
        eta = _eta2d(eta)
        return _multinomial_probs(eta) - y[:, : eta.shape[1]]

    def weights(self, eta, y=None):
        """IRLS curvature w = d2loss/deta2, floored at WEIGHT_FLOOR."""
        if self.kind == "gaussian":
            return np.ones_like(eta)
        if self.kind == "binomial":
            mu = expit(eta)
            w = mu * (1.0 - mu)
        elif self.kind == "poisson":
            w = _exp(eta)
        else:
            mu = _multinomial_probs(_eta2d(eta))
            w = mu * (1.0 - mu)
        return np.maximum(w, WEIGHT_FLOOR)

    def mean(self, eta):
        """Response-scale prediction. Multinomial returns all m class probs."""
        if self.kind == "gaussian":
            return eta
        if self.kind == "binomial":
            return expit(eta)
        if self.kind == "poisson":
            return _exp(eta)
        mu = _multinomial_probs(_eta2d(eta))
        ref = np.clip(1.0 - mu.sum(axis=1), 0.0, 1.0)
        return np.hstack([mu, ref[:, None]])

    # -- deviance -------------------------------------------------------------

    def saturated_loss(self, y):
        if self.kind in ("gaussian", "binomial", "multinomial"):
            return 0.0
        return float(np.sum(y - xlogy(y, y)))

    def deviance(self, eta, y):
        return 2.0 * (self.loss(eta, y) - self.saturated_loss(y))

    def intercept_mle(self, y):
        """Intercept-only maximum-likelihood eta, clamped when degenerate."""
        if self.kind == "gaussian":
            return float(np.mean(y))
        if self.kind == "binomial":
            pbar = np.clip(np.mean(y), PROB_CLAMP, 1.0 - PROB_CLAMP)
            return float(np.log(pbar / (1.0 - pbar)))
        if self.kind == "poisson":
            return float(np.log(max(np.mean(y), PROB_CLAMP)))
        pbar = np.clip(y.mean(axis=0), PROB_CLAMP, 1.0)
        return np.log(pbar[:-1] / pbar[-1])

    def null_deviance(self, y, intercept=True):
        k = self.n_coef_classes
        n = y.shape[0]
        if intercept:
            b0 = self.intercept_mle(y)
        else:
            b0 = np.zeros(k) if self.kind == "multinomial" else 0.0
        if self.kind == "multinomial":
            eta = np.broadcast_to(np.asarray(b0), (n, k))
        else:
            eta = np.full(n, b0)
        return self.deviance(eta, y)


def working_response(eta, r, w):
    """IRLS working response z = eta - r / w (w floored upstream)."""
    return eta - r / w


def loss_value(family, eta, y):
    return family.loss(np.asarray(eta, dtype=np.float64), y)


def residual(family, eta, y):
    return family.residual(np.asarray(eta, dtype=np.float64), y)


def hessian_weight(family, eta, y=None):
    return family.weights(np.asarray(eta, dtype=np.float64), y)


def gradient(X, norm, family, beta, beta0, y):
    """(grad_beta, grad_beta0) of the mean loss F = (1/n) sum f(eta_i, y_i).

    grad_beta[j] = (1/n) sum_i x_ij r_i per class; grad_beta0 = mean(r).
    """
    from .matrix import as_design_matrix

    X = as_design_matrix(X)
    eta = X.matvec(norm, beta) + beta0
    r = family.residual(eta, y)
    grad = X.matvec_t(norm, r) / X.n
    grad0 = r.mean(axis=0) if np.ndim(r) == 2 else float(np.mean(r))
    return grad, grad0


def encode_labels(y, kind, m=None):
    """Encode a raw response vector for the given family kind.

    Returns (family, y_encoded, classes).  Multinomial labels are one-hot
    encoded against the sorted unique classes; binomial two-level labels
    map to {0, 1}.
    """
    y = np.asarray(y)
    if kind == "multinomial":
        classes = np.unique(y)
        if m is not None and len(classes) != m:
            raise ValueError(f"expected {m} classes, found {len(classes)}")
        if len(classes) < 2:
            raise ValueError("multinomial needs at least 2 classes")
        # the first (smallest) class is the implicit reference and sits in
        # the last one-hot column, so the binary case matches binomial
        ordered = np.concatenate([classes[1:], classes[:1]])
        onehot = (y[:, None] == ordered[None, :]).astype(np.float64)
        return Family("multinomial", len(classes)), onehot, ordered
    if kind == "binomial":
        yf = np.asarray(y, dtype=np.float64) if np.issubdtype(y.dtype, np.number) else None
        if yf is not None and np.all((yf == 0) | (yf == 1)):
            return Family("binomial"), yf, np.array([0.0, 1.0])
        classes = np.unique(y)
        if len(classes) != 2:
            raise ValueError("binomial response must have exactly two levels")
        return Family("binomial"), (y == classes[1]).astype(np.float64), classes
    fam = Family(kind)
    return fam, fam.validate_response(np.asarray(y, dtype=np.float64)), None
