"""Tree growth: the discrete attachment rule and its exponential-clock embedding.

Both engines draw all randomness up front from a Philox stream, in a fixed
order (vertex weights, then the per-event variates), so a run is a pure
function of ``(model, t_final, seed)``.

Vertex ``v >= 1`` is born at event ``(v - 1) // ell + 1``; this is used to
recover the tree at any earlier time from the final ``parents`` array.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import AllZero, CapacityExceeded
from .fitness import FitnessModel
from .malthus import fit_value
from .sampler import fw_append, fw_prefix, fw_rebuild, fw_search, fw_set
from .weights import WeightDistribution

MAX_VERTICES = 1 << 27


def make_rng(seed, replica: int | None = None) -> np.random.Generator:
    """Philox generator for ``seed`` (and replica index, if given)."""
    key = () if replica is None else (int(replica),)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def checkpoint_times(t_final: int, base: float = 1.2) -> np.ndarray:
    """``ceil(base**j)`` deduplicated, up to and including ``t_final``."""
    if t_final <= 0:
        return np.array([0], dtype=np.int64)
    out = set()
    j = 0
    while True:
        t = math.ceil(base ** j)
        if t > t_final:
            break
        out.add(t)
        j += 1
    out.add(int(t_final))
    return np.array(sorted(out), dtype=np.int64)


@dataclass
class TreeState:
    parents: np.ndarray  # parents[0] = -1
    out_degree: np.ndarray
    weights: np.ndarray
    partition: float
    t: int
    ell: int

    @property
    def n_vertices(self) -> int:
        return len(self.parents)

    @property
    def events(self) -> np.ndarray:
        """Attachment events per vertex (out-degree divided by ``ell``)."""
        return self.out_degree // self.ell

    def recompute_partition(self, fm: FitnessModel) -> float:
        return float(math.fsum(np.asarray(fm.eval(self.events, self.weights), dtype=float)))

    def check_invariants(self, fm: FitnessModel | None = None) -> None:
        n = 1 + self.ell * self.t
        assert self.n_vertices == n, "vertex count must be 1 + ell*t"
        assert int(self.out_degree.sum()) == self.ell * self.t, "edge count must be ell*t"
        assert (self.out_degree % self.ell == 0).all(), "ell must divide every out-degree"
        if n > 1:
            assert (self.parents[1:] < np.arange(1, n)).all(), "parents precede children"
            assert (self.parents[1:] >= 0).all()
            counts = np.bincount(self.parents[1:], minlength=n)
            assert (counts == self.out_degree).all(), "out-degrees match the parent links"
        if fm is not None:
            z = self.recompute_partition(fm)
            assert abs(z - self.partition) <= 1e-7 * max(abs(z), 1e-300), "partition drift"

    def at_time(self, s: int) -> "TreeState":
        """The tree as it was after ``s`` events (partition not recomputed)."""
        n = 1 + self.ell * s
        par = self.parents[:n]
        deg = np.bincount(par[1:], minlength=n) if n > 1 else np.zeros(1, dtype=np.int64)
        return TreeState(par.copy(), deg, self.weights[:n].copy(), math.nan, s, self.ell)

    def write_edge_list(self, path, header: dict | None = None) -> None:
        """One ``child parent`` line per edge, after a ``#`` provenance header."""
        with open(path, "w") as fh:
            for key, val in (header or {}).items():
                fh.write(f"# {key}: {val}\n")
            fh.write("# child parent\n")
            if self.n_vertices > 1:
                kids = np.arange(1, self.n_vertices)
                np.savetxt(fh, np.column_stack([kids, self.parents[1:]]), fmt="%d")


@dataclass
class GrowthTrajectory:
    t: np.ndarray
    z: np.ndarray
    leaves: np.ndarray
    event_times: np.ndarray | None = None  # continuous engine only
    snapshots: dict = field(default_factory=dict)

    @property
    def z_over_t(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.t > 0, self.z / np.maximum(self.t, 1), np.nan)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _discrete_kernel(code, a, b, table, ext_zero, ell, t_final, u, checkpoints,
                     tree, vals, fmeta, imeta, parents, events, z_out, leaves_out):
    leaves = 1
    ci = 0
    if checkpoints.shape[0] > 0 and checkpoints[0] == 0:
        z_out[0] = fmeta[0]
        leaves_out[0] = leaves
        ci = 1
    for t in range(1, t_final + 1):
        j = fw_search(tree, vals, imeta, u[t - 1] * fmeta[0])
        if j < 0 or fmeta[0] <= 0.0:
            return -t
        k = events[j] + 1
        events[j] = k
        if k == 1:
            leaves -= 1
        row = table[j] if code == 2 else table[0]
        fw_set(tree, vals, fmeta, imeta, j, fit_value(code, k, a[j], b[j], row, ext_zero))
        for c in range(ell):
            v = imeta[0]
            parents[v] = j
            rowc = table[v] if code == 2 else table[0]
            fw_append(tree, vals, fmeta, imeta, fit_value(code, 0, a[v], b[v], rowc, ext_zero))
        leaves += ell
        if ci < checkpoints.shape[0] and checkpoints[ci] == t:
            z_out[ci] = fmeta[0]
            leaves_out[ci] = leaves
            ci += 1
    return 0


@njit(cache=True, nogil=True)
def _heap_push(ht, hv, size, time, v):
    i = size
    ht[i] = time
    hv[i] = v
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] <= ht[i]:
            break
        ht[p], ht[i] = ht[i], ht[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p
    return size + 1


@njit(cache=True, nogil=True)
def _heap_pop(ht, hv, size):
    time = ht[0]
    v = hv[0]
    size -= 1
    ht[0] = ht[size]
    hv[0] = hv[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        m = l
        if l + 1 < size and ht[l + 1] < ht[l]:
            m = l + 1
        if ht[i] <= ht[m]:
            break
        ht[m], ht[i] = ht[i], ht[m]
        hv[m], hv[i] = hv[i], hv[m]
        i = m
    return time, v, size


@njit(cache=True, nogil=True)
def _continuous_kernel(code, a, b, table, ext_zero, ell, t_final, expo, checkpoints,
                       ht, hv, parents, events, z_out, leaves_out, times_out):
    # ht/hv: heap of (ring time, vertex); each live vertex has exactly one entry
    size = 0
    e = 0
    z = 0.0
    zc = 0.0
    row0 = table[0]
    f0 = fit_value(code, 0, a[0], b[0], row0, ext_zero)
    z = f0
    if f0 > 0:
        size = _heap_push(ht, hv, size, expo[e] / f0, 0)
        e += 1
    n = 1
    leaves = 1
    ci = 0
    if checkpoints.shape[0] > 0 and checkpoints[0] == 0:
        z_out[0] = z
        leaves_out[0] = leaves
        ci = 1
    for t in range(1, t_final + 1):
        if size == 0:
            return -t
        now, j, size = _heap_pop(ht, hv, size)
        times_out[t - 1] = now
        k = events[j] + 1
        events[j] = k
        if k == 1:
            leaves -= 1
        row = table[j] if code == 2 else table[0]
        old = fit_value(code, k - 1, a[j], b[j], row, ext_zero)
        rate = fit_value(code, k, a[j], b[j], row, ext_zero)
        # compensated update of the partition function
        y = (rate - old) - zc
        s = z + y
        zc = (s - z) - y
        z = s
        if rate > 0:
            size = _heap_push(ht, hv, size, now + expo[e] / rate, j)
            e += 1
        for c in range(ell):
            v = n
            n += 1
            parents[v] = j
            rowc = table[v] if code == 2 else table[0]
            r0 = fit_value(code, 0, a[v], b[v], rowc, ext_zero)
            y = r0 - zc
            s = z + y
            zc = (s - z) - y
            z = s
            if r0 > 0:
                size = _heap_push(ht, hv, size, now + expo[e] / r0, v)
                e += 1
        leaves += ell
        if ci < checkpoints.shape[0] and checkpoints[ci] == t:
            z_out[ci] = z
            leaves_out[ci] = leaves
            ci += 1
    return 0


# ---------------------------------------------------------------------------
# drivers


def _vertex_params(fm: FitnessModel, w: np.ndarray):
    code, a, b, table = fm.node_params(w)
    a = np.ascontiguousarray(np.broadcast_to(a, w.shape), dtype=float)
    b = np.ascontiguousarray(np.broadcast_to(b, w.shape), dtype=float)
    return code, a, b, np.ascontiguousarray(table, dtype=float)


def _prepare(dist, fm, t_final, seed, replica, max_vertices):
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    n = 1 + fm.ell * int(t_final)
    if n > max_vertices:
        raise CapacityExceeded(f"{n} vertices exceed the cap of {max_vertices}")
    rng = make_rng(seed, replica)
    w = np.asarray(dist.sample(rng, n), dtype=float)
    f0 = np.asarray(fm.eval(0, w[:1]), dtype=float)
    if not f0[0] > 0:
        raise AllZero("the root has zero fitness")
    return rng, n, w


def _finish(fm, w, parents, events, t_final, cps, z, leaves, times=None, z_final=None):
    state = TreeState(parents, events * fm.ell, w, float(z_final if z_final is not None else z[-1]),
                      int(t_final), fm.ell)
    return state, GrowthTrajectory(cps, z, leaves, times)


def grow_discrete(dist: WeightDistribution, fm: FitnessModel, t_final: int, seed: int,
                  replica: int | None = None, max_vertices: int = MAX_VERTICES):
    """Grow a tree for ``t_final`` events by the discrete attachment rule.

    Returns ``(TreeState, GrowthTrajectory)``.
    """
    rng, n, w = _prepare(dist, fm, t_final, seed, replica, max_vertices)
    u = rng.random(int(t_final))
    code, a, b, table = _vertex_params(fm, w)
    cps = checkpoint_times(int(t_final))
    tree = np.zeros(n + 1)
    vals = np.zeros(n)
    fmeta = np.zeros(2)
    imeta = np.zeros(3, dtype=np.int64)
    fw_append(tree, vals, fmeta, imeta, float(fm.eval(0, w[:1])[0]))
    parents = np.full(n, -1, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    z = np.zeros(len(cps))
    leaves = np.zeros(len(cps), dtype=np.int64)
    rc = _discrete_kernel(code, a, b, table, fm.ext_zero, fm.ell, int(t_final), u, cps,
                          tree, vals, fmeta, imeta, parents, events, z, leaves)
    if rc < 0:
        raise AllZero(f"every vertex has zero fitness at event {-rc}")
    fw_rebuild(tree, vals, fmeta, imeta)
    return _finish(fm, w, parents, events, t_final, cps, z, leaves, z_final=fmeta[0])


def grow_continuous(dist: WeightDistribution, fm: FitnessModel, t_final: int, seed: int,
                    replica: int | None = None, max_vertices: int = MAX_VERTICES):
    """Grow the same tree through exponential clocks, stopping at the ``t_final``-th birth event.

    Every vertex carries an exponential clock at rate ``f(k, w)``; when it
    rings the vertex gets ``ell`` children and a fresh clock at its new rate.
    The trajectory also records the ring times.
    """
    rng, n, w = _prepare(dist, fm, t_final, seed, replica, max_vertices)
    expo = rng.standard_exponential(1 + (fm.ell + 1) * int(t_final))
    code, a, b, table = _vertex_params(fm, w)
    cps = checkpoint_times(int(t_final))
    ht = np.zeros(n)
    hv = np.zeros(n, dtype=np.int64)
    parents = np.full(n, -1, dtype=np.int64)
    events = np.zeros(n, dtype=np.int64)
    z = np.zeros(len(cps))
    leaves = np.zeros(len(cps), dtype=np.int64)
    times = np.zeros(int(t_final))
    rc = _continuous_kernel(code, a, b, table, fm.ext_zero, fm.ell, int(t_final), expo, cps,
                            ht, hv, parents, events, z, leaves, times)
    if rc < 0:
        raise AllZero(f"no live clocks remain at event {-rc}")
    return _finish(fm, w, parents, events, t_final, cps, z, leaves, times)


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def default_threads() -> int:
    env = os.environ.get("RIF_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_replicas(dist: WeightDistribution, fm: FitnessModel, t_final: int, n_replicas: int,
                 base_seed: int, bins=None, k_max: int = 50, epsilons=(), engine: str = "discrete",
                 threads: int | None = None, keep_trees: bool = False):
    """Independent replicas merged into one :class:`rif.stats.EmpiricalSummary`.

    Replica ``i`` uses the Philox stream keyed by ``(base_seed, i)``; the
    merge is order independent, so the result does not depend on which
    replica finishes first. With ``keep_trees`` the per-replica trees are
    returned as well (as a list ordered by replica index).
    """
    from .stats import merge, summarize

    if n_replicas < 1:
        raise ValueError("n_replicas must be at least 1")
    grow = {"discrete": grow_discrete, "continuous": grow_continuous}[engine]
    threads = threads or default_threads()
    top = dist.support_sup if dist.is_bounded else None

    def one(i):
        state, traj = grow(dist, fm, t_final, base_seed, replica=i)
        summ = summarize(state, bins, k_max, trajectory=traj, epsilons=epsilons, replica=i,
                         wstar=top)
        return summ, (state if keep_trees else None)

    if threads == 1 or n_replicas == 1:
        results = [one(i) for i in range(n_replicas)]
    else:
        with ThreadPoolExecutor(max_workers=min(threads, n_replicas)) as pool:
            results = list(pool.map(one, range(n_replicas)))
    merged = merge(*[r[0] for r in results])
    if keep_trees:
        return merged, [r[1] for r in results]
    return merged
