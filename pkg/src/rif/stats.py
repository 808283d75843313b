"""Empirical summaries of grown trees and their comparison with limit laws."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import BinGap, InsufficientData, ShapeMismatch
from .weights import REALS


@dataclass
class EmpiricalSummary:
    """Binned degree counts and edge masses, summed over replicas.

    ``counts[k, j]`` counts vertices with ``k`` attachment events (out-degree
    ``k*ell``) and weight in bin ``j``; row ``k_max + 1`` collects everything
    above ``k_max``. ``windows[eps][i]`` is the number of edges whose parent
    weight lies in ``[wstar - eps, wstar]`` at checkpoint ``i``.
    """

    bins: tuple
    k_max: int
    ell: int
    t: int
    counts: np.ndarray
    edge_mass: np.ndarray
    checkpoints: np.ndarray
    z: dict  # replica id -> Z at each checkpoint
    leaves: np.ndarray
    windows: dict = field(default_factory=dict)
    wstar: float = math.nan

    @property
    def replicas(self) -> int:
        return len(self.z)

    @property
    def replica_ids(self) -> tuple:
        return tuple(sorted(self.z))

    @property
    def n_vertices(self) -> int:
        return int(self.counts.sum())

    def check_accounting(self) -> None:
        r = self.replicas
        assert self.n_vertices == r * (1 + self.ell * self.t), "vertex total"
        assert int(self.edge_mass.sum()) == r * self.ell * self.t, "edge total"
        k = np.arange(self.k_max + 1)
        within = (k[:, None] * self.ell * self.counts[:-1]).sum(axis=0)
        assert (within <= self.edge_mass).all()
        assert ((within == self.edge_mass) | (self.counts[-1] > 0)).all()

    def z_over_t(self) -> np.ndarray:
        """Replica-averaged ``Z_t / t`` at each checkpoint (nan at ``t = 0``)."""
        out = np.full(len(self.checkpoints), np.nan)
        ids = self.replica_ids
        for i, t in enumerate(self.checkpoints):
            if t > 0:
                out[i] = math.fsum(self.z[r][i] for r in ids) / (len(ids) * t)
        return out

    def window_mass(self, eps: float) -> np.ndarray:
        """Edge fraction in the top window at each checkpoint."""
        if eps not in self.windows:
            raise InsufficientData(f"no top-window counts were recorded for eps={eps}")
        denom = self.ell * self.checkpoints * self.replicas
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, self.windows[eps] / np.maximum(denom, 1), np.nan)


def _bin_index(weights, bins):
    idx = np.full(len(weights), -1, dtype=np.int64)
    for j, b in enumerate(bins):
        sel = (idx < 0) & b.contains(weights)
        idx[sel] = j
    if (idx < 0).any():
        bad = weights[idx < 0][0]
        raise BinGap(f"weight {bad!r} falls in none of the bins")
    return idx


def summarize(tree, bins=None, k_max: int = 50, trajectory=None, epsilons=(), replica: int = 0,
              wstar: float | None = None) -> EmpiricalSummary:
    """Counts ``N_k(t, B_j)``, edge masses and top-window trajectories of one tree."""
    bins = tuple(bins) if bins is not None else (REALS,)
    nb = len(bins)
    j = _bin_index(tree.weights, bins)
    k = np.minimum(tree.out_degree // tree.ell, k_max + 1)
    counts = np.bincount(k * nb + j, minlength=(k_max + 2) * nb).reshape(k_max + 2, nb)
    edge = np.bincount(j, weights=tree.out_degree, minlength=nb).astype(np.int64)
    if trajectory is not None:
        cps, z, leaves = trajectory.t, trajectory.z, trajectory.leaves
    else:
        cps = np.array([tree.t], dtype=np.int64)
        z = np.array([tree.partition])
        leaves = np.array([int((tree.out_degree == 0).sum())], dtype=np.int64)
    top = float(np.max(tree.weights)) if wstar is None else float(wstar)
    windows = {}
    if tree.n_vertices > 1 and math.isfinite(top):
        pw = tree.weights[tree.parents[1:]]
        for eps in epsilons:
            c = np.concatenate([[0], np.cumsum(pw >= top - eps)])
            windows[eps] = c[np.minimum(tree.ell * cps, len(c) - 1)].astype(np.int64)
    else:
        windows = {eps: np.zeros(len(cps), dtype=np.int64) for eps in epsilons}
    return EmpiricalSummary(bins, int(k_max), tree.ell, int(tree.t), counts.astype(np.int64), edge,
                            np.asarray(cps, dtype=np.int64), {int(replica): np.asarray(z, float)},
                            np.asarray(leaves, dtype=np.int64), windows, top)


def merge(*parts: EmpiricalSummary) -> EmpiricalSummary:
    """Associative, commutative merge of summaries of disjoint replicas."""
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    z: dict = {}
    for p in parts:
        if (p.bins != first.bins or p.k_max != first.k_max or p.ell != first.ell
                or p.t != first.t or not np.array_equal(p.checkpoints, first.checkpoints)
                or set(p.windows) != set(first.windows)):
            raise ShapeMismatch("summaries differ in bins, k_max, ell, t or checkpoints")
        overlap = set(z) & set(p.z)
        if overlap:
            raise ValueError(f"replica ids {sorted(overlap)} appear twice")
        z.update(p.z)
    windows = {e: sum(p.windows[e] for p in parts) for e in first.windows}
    return EmpiricalSummary(
        first.bins, first.k_max, first.ell, first.t,
        sum(p.counts for p in parts), sum(p.edge_mass for p in parts), first.checkpoints,
        dict(sorted(z.items())), sum(p.leaves for p in parts), windows,
        max(p.wstar for p in parts))


# ---------------------------------------------------------------------------
# comparisons


@dataclass
class ComparisonReport:
    max_abs: float
    tv: float
    empirical: np.ndarray
    theoretical: np.ndarray
    residuals: np.ndarray
    k_compared: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"max_abs": self.max_abs, "tv": self.tv, "k_compared": self.k_compared,
             "max_abs_residual": float(np.max(np.abs(self.residuals)))}
        d.update(self.extra)
        return d


def law_from_summary(emp: EmpiricalSummary):
    """The empirical table dressed as a :class:`rif.limits.DegreeLawTable`."""
    from .limits import DegreeLawTable

    scale = emp.ell * emp.t * emp.replicas
    p = emp.counts[:-1] / scale
    return DegreeLawTable(emp.bins, emp.k_max, p, math.nan, emp.ell, emp.counts[-1] / scale,
                          np.zeros(len(emp.bins)), np.zeros(len(emp.bins)))


def compare_degree(emp: EmpiricalSummary, law, k_compare: int | None = None) -> ComparisonReport:
    """Empirical ``N_k(t,B)/(ell*t)`` against the law, cell by cell.

    The row above ``k_max`` is compared as one cell against the law's mass
    beyond ``k_max``. ``max_abs`` is taken over ``k <= k_compare`` (default
    all rows); the total variation uses the whole table.
    """
    if tuple(law.bins) != tuple(emp.bins):
        raise ShapeMismatch("empirical and theoretical bins differ")
    if law.k_max < emp.k_max:
        raise ShapeMismatch(f"law table stops at k={law.k_max} < {emp.k_max}")
    if emp.t == 0:
        raise InsufficientData("no events to compare")
    K = emp.k_max
    n = emp.ell * emp.t * emp.replicas
    e = emp.counts / n
    th = np.zeros_like(e)
    th[: K + 1] = law.p[: K + 1]
    th[K + 1] = law.p[K + 1:].sum(axis=0) + law.tail_mass
    diff = e - th
    se = np.sqrt(np.clip(th * (1 - th), 0, None) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        res = np.where(se > 0, diff / se, np.where(diff == 0, 0.0, np.inf))
    kc = K if k_compare is None else min(int(k_compare), K)
    return ComparisonReport(float(np.max(np.abs(diff[: kc + 1]))), float(0.5 * np.abs(diff).sum()),
                            e, th, res, kc)


def condensation_profile(emp: EmpiricalSummary, wstar: float, epsilons) -> list:
    """``(eps, share of edges out of weights in [wstar - eps, wstar])`` at the final time."""
    if not math.isclose(wstar, emp.wstar, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"summary windows were recorded at w*={emp.wstar}, not {wstar}")
    return [(eps, float(emp.window_mass(eps)[-1])) for eps in epsilons]


@dataclass
class PartitionReport:
    t: int
    z_over_t: float
    predicted: float
    rel_error: float
    trend: float  # Spearman rho of |error| against t (growth-exponent fit when predicted is inf)
    converging: bool
    growth_exponent: float | None = None

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in self.__dict__.items()}


def _trend(t, y):
    if len(t) < 3 or np.allclose(y, y[0]):
        return 0.0
    return float(sps.spearmanr(t, y).statistic)


def partition_diagnostic(traj, predicted: float, last: int = 10) -> PartitionReport:
    """``Z_t/t`` against its predicted limit at the last checkpoint.

    ``traj`` is a :class:`GrowthTrajectory` or an :class:`EmpiricalSummary`.
    """
    if isinstance(traj, EmpiricalSummary):
        t, zt = traj.checkpoints, traj.z_over_t()
    else:
        t, zt = traj.t, traj.z_over_t
    keep = t > 0
    t, zt = t[keep], zt[keep]
    if not len(t):
        raise InsufficientData("trajectory has no checkpoint with t > 0")
    tail_t, tail_z = t[-last:], zt[-last:]
    if math.isinf(predicted):
        if len(tail_t) < 2:
            raise InsufficientData("need two checkpoints to fit a growth exponent")
        slope = float(np.polyfit(np.log(tail_t), np.log(tail_z), 1)[0])
        return PartitionReport(int(t[-1]), float(zt[-1]), predicted, math.inf, slope, slope > 0,
                               slope)
    err = np.abs(tail_z - predicted) / predicted
    rho = _trend(tail_t, err)
    return PartitionReport(int(t[-1]), float(zt[-1]), predicted, float(err[-1]), rho, rho < 0)


def trend_statistic(t, values) -> float:
    """Spearman correlation of ``values`` against ``t``."""
    return _trend(np.asarray(t), np.asarray(values))


def leaf_fraction(emp: EmpiricalSummary) -> np.ndarray:
    """``N_0(t, B_j) / t`` per bin (replica-averaged)."""
    if emp.t == 0:
        raise InsufficientData("leaf fraction is undefined at t = 0")
    return emp.counts[0] / (emp.t * emp.replicas)


def tail_exponent(emp: EmpiricalSummary, bin_index: int = 0, fit_range=(5, 50)):
    """Least-squares slope of ``log p_k`` against ``log k`` over ``fit_range``.

    Returns ``(slope, standard_error)``.
    """
    lo, hi = fit_range
    hi = min(hi, emp.k_max)
    k = np.arange(lo, hi + 1)
    c = emp.counts[lo: hi + 1, bin_index].astype(float)
    keep = c > 0
    if keep.sum() < 5:
        raise InsufficientData(f"only {int(keep.sum())} populated degree cells in {fit_range}")
    fit = sps.linregress(np.log(k[keep]), np.log(c[keep]))
    return float(fit.slope), float(fit.stderr)


# ---------------------------------------------------------------------------
# output


def write_csv(path, columns, rows, header: dict | None = None) -> None:
    """CSV with ``# key: value`` provenance lines before the column header."""
    with open(path, "w", newline="") as fh:
        for key, val in (header or {}).items():
            fh.write(f"# {key}: {val}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def degree_rows(emp: EmpiricalSummary, rep: ComparisonReport):
    for j, b in enumerate(emp.bins):
        for k in range(rep.empirical.shape[0]):
            label = k if k <= emp.k_max else f">{emp.k_max}"
            yield (label, b.lo, b.hi, rep.empirical[k, j], rep.theoretical[k, j],
                   rep.residuals[k, j])
