"""Dynamic weighted sampling with a binary indexed (Fenwick) tree.

The njit functions operate on plain arrays so that the growth kernels in
:mod:`rif.engine` can call them from compiled loops; :class:`WeightedIndex`
is the Python-facing wrapper.

State layout:
    tree   float64[cap + 1]   Fenwick partial sums (1-based)
    vals   float64[cap]       current weights, exact
    fmeta  float64[2]         compensated running total (sum, compensation)
    imeta  int64[3]           size, updates since rebuild, rebuild count
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .errors import AllZero, OutOfRange

REBUILD_EVERY = 1 << 20
DRIFT_RTOL = 1e-7
_CHECK_EVERY = 4096


@njit(cache=True, nogil=True)
def fw_rebuild(tree, vals, fmeta, imeta):
    n = imeta[0]
    tree[:] = 0.0
    for i in range(1, n + 1):
        tree[i] += vals[i - 1]
        j = i + (i & -i)
        if j <= n:
            tree[j] += tree[i]
    # exact-as-possible total from scratch
    s = 0.0
    c = 0.0
    for i in range(n):
        y = vals[i] - c
        t = s + y
        c = (t - s) - y
        s = t
    fmeta[0] = s
    fmeta[1] = c
    imeta[1] = 0
    imeta[2] += 1


@njit(cache=True, nogil=True)
def _kahan_add(fmeta, x):
    y = x - fmeta[1]
    t = fmeta[0] + y
    fmeta[1] = (t - fmeta[0]) - y
    fmeta[0] = t


@njit(cache=True, nogil=True)
def fw_prefix(tree, i):
    """Sum of the first ``i`` weights."""
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & -i
    return s


@njit(cache=True, nogil=True)
def fw_set(tree, vals, fmeta, imeta, i, w):
    """Set weight ``i`` (0-based, ``i < size``) to ``w``."""
    n = imeta[0]
    delta = w - vals[i]
    vals[i] = w
    _kahan_add(fmeta, delta)
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & -j
    imeta[1] += 1
    if imeta[1] >= REBUILD_EVERY:
        fw_rebuild(tree, vals, fmeta, imeta)
    elif imeta[1] % _CHECK_EVERY == 0:
        tot = fw_prefix(tree, n)
        ref = fmeta[0]
        if abs(tot - ref) > DRIFT_RTOL * abs(ref):
            fw_rebuild(tree, vals, fmeta, imeta)


@njit(cache=True, nogil=True)
def fw_append(tree, vals, fmeta, imeta, w):
    """Append a weight at index ``size``; the caller guarantees capacity."""
    n = imeta[0] + 1
    imeta[0] = n
    vals[n - 1] = w
    # node n covers (n - lowbit(n), n]
    s = w
    low = n & -n
    k = 1
    while k < low:
        s += tree[n - k]
        k <<= 1
    tree[n] = s
    _kahan_add(fmeta, w)


@njit(cache=True, nogil=True)
def fw_search(tree, vals, imeta, target):
    """Smallest 0-based ``i`` with ``prefix(i + 1) > target``; -1 if none.

    Rounding in the partial sums can land on a zero-weight slot or run past
    the end; both are repaired by stepping to the nearest positive weight.
    """
    n = imeta[0]
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step >>= 1
    if pos >= n:
        pos = n - 1
        while pos >= 0 and vals[pos] <= 0.0:
            pos -= 1
        return pos
    if vals[pos] > 0.0:
        return pos
    i = pos + 1
    while i < n and vals[i] <= 0.0:
        i += 1
    if i < n:
        return i
    i = pos - 1
    while i >= 0 and vals[i] <= 0.0:
        i -= 1
    return i


@njit(cache=True, nogil=True)
def fw_total(fmeta):
    return fmeta[0]


class WeightedIndex:
    """Prefix-sum index over nonnegative weights with O(log n) update and sample."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.tree = np.zeros(self.capacity + 1)
        self.vals = np.zeros(self.capacity)
        self.fmeta = np.zeros(2)
        self.imeta = np.zeros(3, dtype=np.int64)

    @classmethod
    def build(cls, weights, capacity: int | None = None) -> "WeightedIndex":
        w = np.asarray(weights, dtype=float).ravel()
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError("weights must be finite and nonnegative")
        if not (w > 0).any():
            raise AllZero("every weight is zero")
        idx = cls(max(len(w), capacity or 0))
        idx.vals[: len(w)] = w
        idx.imeta[0] = len(w)
        fw_rebuild(idx.tree, idx.vals, idx.fmeta, idx.imeta)
        idx.imeta[2] = 0
        return idx

    def __len__(self):
        return int(self.imeta[0])

    @property
    def total(self) -> float:
        return float(self.fmeta[0])

    @property
    def updates_since_rebuild(self) -> int:
        return int(self.imeta[1])

    @property
    def rebuilds(self) -> int:
        return int(self.imeta[2])

    def weight(self, i: int) -> float:
        self._check(i)
        return float(self.vals[i])

    def _check(self, i):
        if not 0 <= i < len(self):
            raise OutOfRange(f"index {i} outside [0, {len(self)})")

    def update(self, i: int, new_weight: float) -> None:
        self._check(i)
        if not new_weight >= 0 or not np.isfinite(new_weight):
            raise ValueError("weights must be finite and nonnegative")
        fw_set(self.tree, self.vals, self.fmeta, self.imeta, int(i), float(new_weight))

    def append(self, w: float) -> int:
        if len(self) >= self.capacity:
            raise OutOfRange("index capacity exhausted")
        if not w >= 0 or not np.isfinite(w):
            raise ValueError("weights must be finite and nonnegative")
        fw_append(self.tree, self.vals, self.fmeta, self.imeta, float(w))
        return len(self) - 1

    def prefix(self, i: int) -> float:
        """Sum of the first ``i`` weights as stored in the tree."""
        return float(fw_prefix(self.tree, int(i)))

    def sample(self, u: float) -> int:
        """Smallest ``i`` with ``prefix(i + 1) > u * total``, for ``u`` in [0, 1)."""
        if not 0.0 <= u < 1.0:
            raise ValueError("u must lie in [0, 1)")
        if not self.total > 0:
            raise AllZero("every weight is zero")
        i = fw_search(self.tree, self.vals, self.imeta, u * self.total)
        if i < 0:
            raise AllZero("every weight is zero")
        return int(i)

    def rebuild(self) -> None:
        fw_rebuild(self.tree, self.vals, self.fmeta, self.imeta)

    def exact_total(self) -> float:
        return float(np.sum(self.vals[: len(self)]))
