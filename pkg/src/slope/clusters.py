"""Partition of coefficients into equal-magnitude clusters.

Cluster magnitudes, sizes, and identities live in small Python lists kept
sorted by descending magnitude; each cluster's coefficient indices are
stored as a list of index-array chunks so that merges append a chunk
instead of rebuilding index storage.  A zero-magnitude cluster, when
present, is always last and is exempt from the strict-ordering rule.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right

import numpy as np


class Clusters:
    def __init__(self, p):
        self.p = p
        self._c = []  # magnitudes, strictly decreasing, last may be 0
        self._chunks = []  # per cluster: list of int ndarrays
        self._sizes = []
        self._ids = []  # stable identity tags for sweep bookkeeping
        self._next_id = 0
        self.alloc_elems = 0  # instrumentation: index elements copied
        self._np_cache = None  # (magnitudes, sizes) ndarray mirror

    # -- construction --------------------------------------------------------

    @classmethod
    def from_beta(cls, beta, tol=0.0):
        """Group coefficients whose |beta_j| agree (within tol, default exact)."""
        beta = np.asarray(beta, dtype=np.float64).ravel()
        self = cls(beta.size)
        if beta.size == 0:
            return self
        mags = np.abs(beta)
        order = np.argsort(-mags, kind="stable")
        smag = mags[order]
        if tol > 0.0:
            brk = np.flatnonzero(smag[:-1] - smag[1:] > tol) + 1
        else:
            brk = np.flatnonzero(smag[:-1] != smag[1:]) + 1
        starts = np.concatenate(([0], brk))
        ends = np.concatenate((brk, [beta.size]))
        for a, b in zip(starts, ends):
            self._c.append(float(smag[a]))
            self._chunks.append([order[a:b]])
            self._sizes.append(int(b - a))
            self._ids.append(self._next_id)
            self._next_id += 1
        self.alloc_elems += beta.size
        return self

    def copy(self):
        out = Clusters(self.p)
        out._c = list(self._c)
        out._chunks = [list(pieces) for pieces in self._chunks]
        out._sizes = list(self._sizes)
        out._ids = list(self._ids)
        out._next_id = self._next_id
        out._np_cache = self._np_cache
        return out

    # -- accessors ------------------------------------------------------------

    @property
    def m(self):
        return len(self._c)

    def magnitude(self, k):
        return self._c[k]

    def size(self, k):
        return self._sizes[k]

    def cluster_id(self, k):
        return self._ids[k]

    def position_of(self, cluster_id):
        try:
            return self._ids.index(cluster_id)
        except ValueError:
            return -1

    @property
    def magnitudes(self):
        return self.arrays()[0]

    def arrays(self):
        """(magnitudes, sizes) as ndarrays, cached between mutations."""
        if self._np_cache is None:
            self._np_cache = (
                np.fromiter(self._c, dtype=np.float64, count=len(self._c)),
                np.fromiter(self._sizes, dtype=np.intp, count=len(self._sizes)),
            )
        return self._np_cache

    @property
    def has_zero(self):
        return bool(self._c) and self._c[-1] == 0.0

    @property
    def n_nonzero(self):
        """Cluster count excluding the zero cluster."""
        return self.m - 1 if self.has_zero else self.m

    def members(self, k):
        """Coefficient indices of cluster k (consolidated to one chunk)."""
        pieces = self._chunks[k]
        if len(pieces) > 1:
            merged = np.concatenate(pieces)
            self._chunks[k] = [merged]
            self.alloc_elems += merged.size
        return self._chunks[k][0]

    def to_arrays(self):
        """Materialize (c, c_idx, c_ptr) with cluster k at
        c_idx[c_ptr[k] : c_ptr[k+1]]."""
        c = np.asarray(self._c)
        ptr = np.zeros(self.m + 1, dtype=np.intp)
        np.cumsum(self._sizes, out=ptr[1:])
        idx = np.empty(self.p, dtype=np.intp)
        for k in range(self.m):
            idx[ptr[k] : ptr[k + 1]] = self.members(k)
        return c, idx, ptr

    def reconstruct(self):
        """|beta| implied by the current state."""
        out = np.empty(self.p)
        for k in range(self.m):
            out[self.members(k)] = self._c[k]
        return out

    def penalty(self, cumsum0):
        """sum_k c_k * (window of lambda assigned to cluster k)."""
        total = 0.0
        off = 0
        for k in range(self.m):
            nxt = off + self._sizes[k]
            total += self._c[k] * (cumsum0[nxt] - cumsum0[off])
            off = nxt
        return total

    def validate(self):
        if sum(self._sizes) != self.p:
            raise AssertionError("cluster sizes do not sum to p")
        seen = np.zeros(self.p, dtype=bool)
        for k in range(self.m):
            mem = self.members(k)
            if mem.size != self._sizes[k]:
                raise AssertionError("chunk size mismatch")
            if np.any(seen[mem]):
                raise AssertionError("index appears in two clusters")
            seen[mem] = True
            if self._c[k] < 0:
                raise AssertionError("negative magnitude")
            if k + 1 < self.m and not self._c[k] > self._c[k + 1]:
                raise AssertionError("magnitudes not strictly decreasing")
        if not np.all(seen):
            raise AssertionError("c_idx is not a permutation of 0..p-1")
        if len(set(self._ids)) != self.m:
            raise AssertionError("duplicate cluster ids")

    # -- mutation ---------------------------------------------------------------

    def _insertion_position(self, mag, skip):
        """Position for magnitude among clusters, ignoring cluster ``skip``."""
        # list is sorted descending; bisect on the negated key
        lo = bisect_left(self._c, -mag, key=lambda x: -x)
        hi = bisect_right(self._c, -mag, key=lambda x: -x)
        if lo < hi and lo != skip:  # ties an existing magnitude
            return lo, True
        pos = lo
        if pos > skip:
            pos -= 1
        return pos, False

    def update_cluster(self, k, new_mag, merge_with=None):
        """Set cluster k's magnitude, merging/reordering/removing as needed.

        ``merge_with`` names the cluster (by current position) whose
        magnitude exactly equals ``new_mag``; without it, a colliding
        magnitude is detected and merged automatically.  Setting 0 moves
        the cluster into the zero cluster.  Cost is O(moved indices) plus
        list shifting; index storage is never rebuilt.
        """
        if new_mag < 0:
            raise ValueError("cluster magnitude must be non-negative")
        if not 0 <= k < self.m:
            raise IndexError("cluster index out of range")
        if merge_with is None:
            if new_mag == self._c[k]:
                return
            if new_mag == 0.0 and self.has_zero and k != self.m - 1:
                merge_with = self.m - 1
            else:
                pos, collide = self._insertion_position(new_mag, k)
                if collide:
                    merge_with = pos
                else:
                    self._move(k, pos, new_mag)
                    return
        if merge_with == k:
            self._c[k] = new_mag
            self._np_cache = None
            return
        self._merge(k, merge_with)

    def _move(self, k, j, new_mag):
        self._np_cache = None
        c = self._c.pop(k)
        pieces = self._chunks.pop(k)
        size = self._sizes.pop(k)
        cid = self._ids.pop(k)
        self._c.insert(j, new_mag)
        self._chunks.insert(j, pieces)
        self._sizes.insert(j, size)
        self._ids.insert(j, cid)

    def _merge(self, k, target):
        self._np_cache = None
        self._chunks[target].extend(self._chunks[k])
        self._sizes[target] += self._sizes[k]
        self._c.pop(k)
        self._chunks.pop(k)
        self._sizes.pop(k)
        self._ids.pop(k)


def pattern_rows(clusters, beta):
    """(coefficient_index, cluster_id, magnitude, sign) rows for export."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    rows = []
    for k in range(clusters.m):
        mag = clusters.magnitude(k)
        for j in sorted(int(i) for i in clusters.members(k)):
            rows.append((j, k, mag, int(np.sign(beta[j]))))
    rows.sort()
    return rows
