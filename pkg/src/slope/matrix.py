"""Design-matrix storage with just-in-time centering and scaling.

Dense (ndarray) and sparse (CSC) predictors share one interface.
Normalization is applied algebraically as columns are read, so the
stored data is never modified, and row/column subsetting produces views
that share the parent storage.  Operations on row views work through
full-length scatter/gather buffers instead of copying the matrix, which
trades some arithmetic for a memory footprint of O(n) + O(p).
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

CENTERING_MODES = ("none", "mean", "manual")
SCALING_MODES = ("none", "sd", "l1", "l2", "max_abs", "manual")


@dataclass(frozen=True)
class Normalization:
    """Per-column affine view (x - center) / scale of a design matrix."""

    centers: np.ndarray
    scales: np.ndarray
    centering: str = "none"
    scaling: str = "none"

    def __post_init__(self):
        centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "scales", scales)
        if centers.ndim != 1 or centers.shape != scales.shape:
            raise ValueError("centers and scales must be 1-d and equally long")
        if not np.all(scales > 0):
            raise ValueError("scales must be strictly positive")

    @classmethod
    def identity(cls, p):
        return cls(np.zeros(p), np.ones(p))

    def subset(self, cols):
        return Normalization(
            self.centers[cols], self.scales[cols], self.centering, self.scaling
        )


class DesignMatrix:
    """n x p predictor matrix, dense or CSC sparse, with cheap subviews.

    ``rows`` / ``cols`` restrict the logical matrix without copying the
    storage.  All views share an instrumentation dict counting per-column
    gradient evaluations (``col_evals``) and storage copies
    (``storage_copies``, which normal operation never increments).
    """

    def __init__(self, storage, rows=None, cols=None, counters=None):
        if sp.issparse(storage):
            storage = storage.tocsc(copy=False)
            if storage.dtype != np.float64:
                storage = storage.astype(np.float64)
            storage.sum_duplicates()
            storage.sort_indices()
            _check_csc(storage)
            self.sparse = True
        else:
            storage = np.asarray(storage, dtype=np.float64)
            if storage.ndim != 2:
                raise ValueError("dense storage must be two-dimensional")
            self.sparse = False
        self.storage = storage
        self.rows = None if rows is None else np.asarray(rows, dtype=np.intp)
        self.cols = None if cols is None else np.asarray(cols, dtype=np.intp)
        if counters is None:
            counters = {"col_evals": 0, "storage_copies": 0}
        self.counters = counters

    # -- shape ------------------------------------------------------------

    @property
    def n(self):
        return self.storage.shape[0] if self.rows is None else len(self.rows)

    @property
    def p(self):
        return self.storage.shape[1] if self.cols is None else len(self.cols)

    @property
    def shape(self):
        return (self.n, self.p)

    def subset_rows(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        parent = self.rows
        new_rows = rows if parent is None else parent[rows]
        return DesignMatrix(self.storage, new_rows, self.cols, self.counters)

    def subset_cols(self, cols):
        cols = np.asarray(cols, dtype=np.intp)
        parent = self.cols
        new_cols = cols if parent is None else parent[cols]
        return DesignMatrix(self.storage, self.rows, new_cols, self.counters)

    # -- raw storage access -----------------------------------------------

    def _storage_col(self, j):
        """Logical column j mapped to a storage column index."""
        return j if self.cols is None else self.cols[j]

    def _scatter(self, v):
        """Lift view-space values (n, ...) to full storage row space."""
        v = np.asarray(v, dtype=np.float64)
        if self.rows is None:
            return v
        out = np.zeros((self.storage.shape[0],) + v.shape[1:])
        out[self.rows] = v
        return out

    def _raw_col_dot(self, storage_j, v_full):
        if self.sparse:
            s = self.storage
            a, b = s.indptr[storage_j], s.indptr[storage_j + 1]
            return s.data[a:b] @ v_full[s.indices[a:b]]
        return self.storage[:, storage_j] @ v_full

    def _raw_col_stats(self, storage_j):
        """(sum, sum of squares, l1 sum, max abs) over the view's rows."""
        n = self.n
        if self.sparse:
            s = self.storage
            a, b = s.indptr[storage_j], s.indptr[storage_j + 1]
            vals = s.data[a:b]
            if self.rows is not None:
                mask = np.zeros(self.storage.shape[0], dtype=bool)
                mask[self.rows] = True
                vals = vals[mask[s.indices[a:b]]]
            has_zero = vals.size < n
        else:
            col = self.storage[:, storage_j]
            vals = col if self.rows is None else col[self.rows]
            has_zero = False
        av = np.abs(vals)
        mx = av.max(initial=0.0) if has_zero else (av.max() if av.size else 0.0)
        return vals.sum(), vals @ vals, av.sum(), mx

    def add_column_raw(self, j, out_full, scale):
        """out_full += scale * storage column (full row space, no centering)."""
        storage_j = self._storage_col(j)
        if self.sparse:
            s = self.storage
            a, b = s.indptr[storage_j], s.indptr[storage_j + 1]
            out_full[s.indices[a:b]] += scale * s.data[a:b]
        else:
            out_full += scale * self.storage[:, storage_j]

    # -- normalized operations ----------------------------------------------

    def column_dot(self, norm, j, v):
        """Dot of normalized column j with v: sum_i ((x_ij - c_j)/s_j) v_i."""
        if not 0 <= j < self.p:
            raise IndexError(f"column {j} out of range for p={self.p}")
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise ValueError("vector length does not match sample count")
        raw = self._raw_col_dot(self._storage_col(j), self._scatter(v))
        self.counters["col_evals"] += 1
        return (raw - norm.centers[j] * v.sum()) / norm.scales[j]

    def matvec_t(self, norm, v):
        """Normalized X^T v for all p columns; v is (n,) or (n, k)."""
        v = np.asarray(v, dtype=np.float64)
        squeeze = v.ndim == 1
        v2 = v[:, None] if squeeze else v
        vf = self._scatter(v2)
        colsum = v2.sum(axis=0)
        if self.cols is None:
            raw = np.asarray(self.storage.T @ vf)
            self.counters["col_evals"] += self.storage.shape[1]
        else:
            raw = np.empty((len(self.cols), v2.shape[1]))
            for out_j, storage_j in enumerate(self.cols):
                for k in range(v2.shape[1]):
                    raw[out_j, k] = self._raw_col_dot(storage_j, vf[:, k])
            self.counters["col_evals"] += len(self.cols)
        dots = (raw - np.outer(norm.centers, colsum)) / norm.scales[:, None]
        return dots[:, 0] if squeeze else dots

    def matvec(self, norm, beta):
        """Normalized X @ beta; beta is (p,) or (p, k). Skips zero entries."""
        beta = np.asarray(beta, dtype=np.float64)
        squeeze = beta.ndim == 1
        b2 = beta[:, None] if squeeze else beta
        if b2.shape[0] != self.p:
            raise ValueError("coefficient length does not match predictor count")
        bs = b2 / norm.scales[:, None]
        offset = (norm.centers / norm.scales) @ b2
        nz = np.flatnonzero(np.any(b2 != 0, axis=1))
        dense_bulk = (
            self.cols is None
            and not self.sparse
            and nz.size > max(8, self.p // 4)
        )
        if self.cols is None and (self.sparse or dense_bulk):
            full = np.asarray(self.storage @ bs)
        else:
            full = np.zeros((self.storage.shape[0], b2.shape[1]))
            for j in nz:
                for k in range(b2.shape[1]):
                    if bs[j, k] != 0.0:
                        self.add_column_raw(j, full[:, k], bs[j, k])
        eta = full if self.rows is None else full[self.rows]
        eta = eta - offset
        return eta[:, 0] if squeeze else eta

    def column_means(self, norm):
        """Means of the normalized columns over the view's rows."""
        w = np.full(self.n, 1.0 / self.n)
        return self.matvec_t(norm, w)

    def checksum(self):
        h = hashlib.sha256()
        if self.sparse:
            for arr in (self.storage.data, self.storage.indices, self.storage.indptr):
                h.update(np.ascontiguousarray(arr).tobytes())
        else:
            h.update(np.ascontiguousarray(self.storage).tobytes())
        return h.hexdigest()


def _check_csc(s):
    indptr, indices = s.indptr, s.indices
    if indptr[0] != 0 or indptr[-1] != s.nnz:
        raise ValueError("invalid CSC column pointers")
    if np.any(np.diff(indptr) < 0):
        raise ValueError("CSC column pointers must be non-decreasing")
    n = s.shape[0]
    if indices.size:
        if indices.min() < 0 or indices.max() >= n:
            raise ValueError("CSC row indices out of range")
        for j in range(s.shape[1]):
            col = indices[indptr[j] : indptr[j + 1]]
            if col.size > 1 and np.any(np.diff(col) <= 0):
                raise ValueError("CSC row indices must be strictly increasing")


def as_design_matrix(x):
    return x if isinstance(x, DesignMatrix) else DesignMatrix(x)


def fit_normalization(X, centering="none", scaling="none", centers=None, scales=None):
    """Compute centers/scales for a design matrix per the requested modes.

    ``sd`` is the population standard deviation (divide by n); columns with
    zero spread (or zero norm) get scale 1 so they stay in the problem with
    a zero effective gradient instead of producing NaNs.
    """
    if centering not in CENTERING_MODES:
        raise ValueError(f"unknown centering mode {centering!r}")
    if scaling not in SCALING_MODES:
        raise ValueError(f"unknown scaling mode {scaling!r}")
    X = as_design_matrix(X)
    n, p = X.shape

    need_stats = centering == "mean" or scaling in ("sd", "l1", "l2", "max_abs")
    if need_stats:
        sums = np.empty(p)
        sumsq = np.empty(p)
        l1 = np.empty(p)
        mx = np.empty(p)
        for j in range(p):
            sums[j], sumsq[j], l1[j], mx[j] = X._raw_col_stats(X._storage_col(j))
        means = sums / n

    if centering == "none":
        c = np.zeros(p)
    elif centering == "mean":
        c = means
    else:
        if centers is None or len(centers) != p:
            raise ValueError("manual centering requires a length-p vector")
        c = np.asarray(centers, dtype=np.float64)

    if scaling == "none":
        s = np.ones(p)
    elif scaling == "manual":
        if scales is None or len(scales) != p:
            raise ValueError("manual scaling requires a length-p vector")
        s = np.asarray(scales, dtype=np.float64).copy()
        if np.any(s <= 0):
            raise ValueError("manual scales must be strictly positive")
    else:
        if scaling == "sd":
            s = np.sqrt(np.maximum(sumsq / n - means**2, 0.0))
        elif scaling == "l1":
            s = l1.copy()
        elif scaling == "l2":
            s = np.sqrt(sumsq)
        else:  # max_abs
            s = mx.copy()
        s[s == 0.0] = 1.0

    return Normalization(c, s, centering, scaling)


def column_dot(X, norm, j, v):
    return as_design_matrix(X).column_dot(norm, j, v)


def linear_predictor(X, norm, beta, beta0=0.0):
    """eta = beta0 + normalized X @ beta, iterating only over nonzeros."""
    return as_design_matrix(X).matvec(norm, beta) + beta0


# -- file readers ----------------------------------------------------------


def read_dense_csv(path, header=True, delimiter=","):
    """Read a dense CSV table. Returns (cells, column names or None).

    Cells are kept as strings so a non-numeric response column can be
    extracted before the predictors are converted to floats.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delimiter) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    names = None
    if header:
        names = [c.strip() for c in rows.pop(0)]
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
    return rows, names


def read_libsvm(path):
    """Read svmlight/libsvm text: `label idx:val ...` with 1-based indices."""
    labels = []
    ii, jj, vv = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            labels.append(float(parts[0]))
            row = len(labels) - 1
            for tok in parts[1:]:
                idx, val = tok.split(":", 1)
                j = int(idx)
                if j < 1:
                    raise ValueError(f"line {lineno + 1}: indices are 1-based")
                ii.append(row)
                jj.append(j - 1)
                vv.append(float(val))
    n = len(labels)
    p = max(jj) + 1 if jj else 0
    mat = sp.coo_matrix((vv, (ii, jj)), shape=(n, p)).tocsc()
    return mat, np.asarray(labels)
