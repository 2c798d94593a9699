"""The sorted L1 norm, its dual norm, proximal operator, and the
cluster thresholding operator.

The proximal operator follows the classic route: sort the magnitudes,
subtract the (scaled) penalty weights, run non-increasing isotonic
regression with a stack-based pool-adjacent-violators pass, clip at zero,
and undo the sort.  The thresholding operator finds a cluster's optimal
new magnitude by a linear search over the intervals delimited by the
other clusters' magnitudes, using precomputed cumulative penalty sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

LAMBDA_KINDS = ("bh", "gaussian", "oscar", "lasso", "custom")


@dataclass(frozen=True)
class LambdaSequence:
    """Non-increasing penalty weights plus the global multiplier alpha."""

    values: np.ndarray
    kind: str = "custom"
    alpha: float = 1.0
    q: float | None = None
    theta1: float | None = None
    theta2: float | None = None
    cumsum0: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("lambda values must be a non-empty 1-d array")
        if values[0] <= 0:
            raise ValueError("lambda values must not be all zero")
        if np.any(values < 0):
            raise ValueError("lambda values must be non-negative")
        if np.any(np.diff(values) > 0):
            raise ValueError("lambda values must be non-increasing")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        cs = np.empty(values.size + 1)
        cs[0] = 0.0
        np.cumsum(values, out=cs[1:])
        object.__setattr__(self, "cumsum0", cs)

    @property
    def cumsum(self):
        return self.cumsum0[1:]

    def __len__(self):
        return self.values.size

    def truncate(self, q):
        """First q values (used when solving a screened subproblem)."""
        if q == len(self):
            return self
        return LambdaSequence(self.values[:q], self.kind, self.alpha,
                              self.q, self.theta1, self.theta2)


def bh_sequence(p, q):
    """Benjamini-Hochberg weights: normal quantiles at 1 - q*j/(2p)."""
    if not 0 < q < 1:
        raise ValueError("q must be in (0, 1)")
    j = np.arange(1, p + 1)
    return ndtri(1.0 - q * j / (2.0 * p))


def gaussian_sequence(p, q, n):
    """BH weights inflated for estimated noise, then kept non-increasing.

    lam[0] is the BH value; for j >= 2 (while n - j > 0) each BH value is
    multiplied by sqrt(1 + sum_{i<j} lam_i^2 / (n - j)); past that point,
    and from the first increase onward, the sequence is held flat at the
    last valid value.
    """
    if n is None or n < 1:
        raise ValueError("gaussian sequence requires the sample count n")
    lam = bh_sequence(p, q)
    sumsq = 0.0
    cut = p
    for j in range(2, p + 1):
        sumsq += lam[j - 2] ** 2
        if n - j <= 0:
            cut = j - 1
            break
        lam[j - 1] *= np.sqrt(1.0 + sumsq / (n - j))
        if lam[j - 1] > lam[j - 2]:
            cut = j - 1
            break
    lam[cut:] = lam[cut - 1]
    return lam


def make_lambda(kind, p_total, q=None, n=None, theta1=None, theta2=None,
                values=None, alpha=1.0):
    """Build a LambdaSequence of one of the supported kinds."""
    if p_total <= 0:
        raise ValueError("p_total must be positive")
    if kind == "bh":
        vals = bh_sequence(p_total, q)
    elif kind == "gaussian":
        vals = gaussian_sequence(p_total, q, n)
    elif kind == "oscar":
        t1 = 0.0 if theta1 is None else float(theta1)
        t2 = 0.0 if theta2 is None else float(theta2)
        if t1 < 0 or t2 < 0 or (t1 == 0 and t2 == 0):
            raise ValueError("oscar needs theta1, theta2 >= 0, not both zero")
        vals = t1 + t2 * (p_total - np.arange(1, p_total + 1))
    elif kind == "lasso":
        vals = np.ones(p_total)
    elif kind == "custom":
        if values is None:
            raise ValueError("custom sequence requires values")
        vals = np.asarray(values, dtype=np.float64)
        if vals.size != p_total:
            raise ValueError("custom sequence has wrong length")
    else:
        raise ValueError(f"unknown lambda kind {kind!r}")
    return LambdaSequence(vals, kind, alpha, q, theta1, theta2)


def sorted_l1_norm(beta, lam):
    """J(beta) = sum_j lam_j |beta|_(j), magnitudes sorted descending."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    vals = lam.values if isinstance(lam, LambdaSequence) else np.asarray(lam)
    if beta.size != vals.size:
        raise ValueError("beta and lambda lengths differ")
    mags = np.sort(np.abs(beta))[::-1]
    return float(mags @ vals)


def dual_norm(z, lam):
    """Dual of the sorted L1 norm: max_j cumsum(|z| desc)_j / cumsum(lam)_j."""
    z = np.asarray(z, dtype=np.float64).ravel()
    vals = lam.values if isinstance(lam, LambdaSequence) else np.asarray(lam)
    if z.size != vals.size:
        raise ValueError("z and lambda lengths differ")
    if z.size == 0:
        return 0.0
    cz = np.cumsum(np.sort(np.abs(z))[::-1])
    cl = np.cumsum(vals)
    return float(np.max(cz / cl))


def prox(v, lam, scale=1.0):
    """argmin_x 0.5 ||x - v||^2 + scale * J_lam(x).

    ``scale`` is the product of the step size and the alpha multiplier.
    Ties in |v| are broken by original index (stable sort), which is
    irrelevant for the value but makes the output deterministic.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    vals = lam.values if isinstance(lam, LambdaSequence) else np.asarray(lam)
    if v.size != vals.size:
        raise ValueError("v and lambda lengths differ")
    p = v.size
    av = np.abs(v)
    order = np.argsort(-av, kind="stable")
    u = av[order] - scale * vals

    # stack PAVA for a non-increasing fit: pool while a later block mean
    # exceeds an earlier one (compare via cross-multiplication)
    sums = np.empty(p)
    cnts = np.empty(p, dtype=np.intp)
    top = 0
    for x in u:
        sums[top] = x
        cnts[top] = 1
        top += 1
        while top > 1 and sums[top - 1] * cnts[top - 2] > sums[top - 2] * cnts[top - 1]:
            sums[top - 2] += sums[top - 1]
            cnts[top - 2] += cnts[top - 1]
            top -= 1

    fitted = np.empty(p)
    pos = 0
    for b in range(top):
        blk = max(sums[b] / cnts[b], 0.0)
        fitted[pos : pos + cnts[b]] = blk
        pos += cnts[b]

    out = np.empty(p)
    out[order] = fitted
    return np.sign(v) * out


def slope_threshold(v, xi, cluster_size, other_mags, other_offsets, cumsum0,
                    alpha, start=0):
    """Optimal non-negative magnitude for one cluster, others held fixed.

    Minimizes 0.5*xi*(z - v/xi)^2 + alpha*H(z) over z >= 0, where H(z) is
    the sorted-L1 contribution of placing ``cluster_size`` coefficients at
    magnitude z among the other clusters' fixed magnitudes.  ``other_mags``
    are the other nonzero cluster magnitudes (strictly decreasing) and
    ``other_offsets[i]`` counts their coefficients above interval i, so the
    penalty slope on interval i is a cumulative-sum window of lambda.

    Returns (magnitude, merge_index): ``merge_index`` indexes other_mags
    when the result lands exactly on an existing magnitude, else None.
    A zero result is returned as exactly 0.0.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    M = len(other_mags)
    i = min(max(start, 0), M)
    direction = 0
    while True:
        off = other_offsets[i]
        slope_sum = cumsum0[off + cluster_size] - cumsum0[off]
        z = (v - alpha * slope_sum) / xi
        hi = np.inf if i == 0 else other_mags[i - 1]
        lo = other_mags[i] if i < M else 0.0
        if z > hi:
            if direction == 1:
                return hi, i - 1
            i -= 1
            direction = -1
        elif z < lo:
            if i == M:
                return 0.0, None
            if direction == -1:
                return lo, i
            i += 1
            direction = 1
        else:
            if i < M and z == lo:
                return lo, i
            if i > 0 and z == hi:
                return hi, i - 1
            if z <= 0.0:
                return 0.0, None
            return z, None
