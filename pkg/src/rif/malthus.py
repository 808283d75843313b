"""The Malthusian function ``m(lambda)``, its root, and regime classification.

For a weight ``w`` write ``r_i = f(i,w) / (f(i,w) + lambda)`` and
``S_n = r_0 ... r_{n-1}``. Then ``m(lambda) = ell * E[sum_{n>=1} S_n(W)]``.

Every fitness family in :mod:`rif.fitness` is affine in ``k`` beyond some
index ``i0`` (GPAF from 0, constant from 0, Cayley from 1, tables from their
last row). Past ``i0`` the remaining sum telescopes through Gamma-function
ratios to ``S_i * f(i,w) / (lambda - slope)``, which is finite iff
``lambda > slope``. The per-weight series is summed term by term until the
remainder is below tolerance (or the term cap is hit) and then closed with
that exact remainder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import Inconclusive, SeriesInconclusive
from .fitness import AFFINE, CAYLEY, FitnessModel
from .weights import DEFAULT_QUAD, QuadratureSpec, WeightDistribution, expect

OK, DIVERGENT, INCONCLUSIVE = 0, 1, 2

C1, CONDENSATION, BOUNDARY, DEGENERATE = "C1", "Condensation", "Boundary", "Degenerate"

K_MAX = 100_000
TERM_TOL = 1e-12
TINY = 1e-300


@njit(cache=True, inline="always")
def fit_value(code, k, a, b, row, ext_zero):
    if code == AFFINE:
        return a * k + b
    if code == CAYLEY:
        return b if k == 0 else 0.0
    last = row.shape[0] - 1
    if k <= last:
        return row[k]
    return 0.0 if ext_zero else row[last]


@njit(cache=True, inline="always")
def _affine_start(code, row_len, ext_zero):
    if code == AFFINE:
        return 0
    if code == CAYLEY:
        return 1
    return row_len if ext_zero else row_len - 1


@njit(cache=True)
def node_remainder(code, a, b, row, ext_zero, lam, i, prod, kmax, tol):
    """``sum_{n >= i+1} S_n`` given ``prod = S_i``.

    Returns ``(value, status, index_reached, estimated_error)``.
    """
    i0 = _affine_start(code, row.shape[0], ext_zero)
    slope = a if code == AFFINE else 0.0
    s = 0.0
    n = i
    prev_r = 2.0
    ratio_nonincr = True
    stalled = 0
    prev_t = prod
    while True:
        # flush subnormal products: they stop shrinking under rounding and
        # would otherwise trip the stalled-terms divergence rule
        if prod < TINY:
            return s, OK, n, 0.0
        f = fit_value(code, n, a, b, row, ext_zero)
        if n >= i0:
            if f == 0.0:
                return s, OK, n, 0.0
            if lam <= slope:
                return math.inf, DIVERGENT, n, 0.0
            rest = prod * f / (lam - slope)
            if rest <= tol * (s + rest) or n - i >= kmax:
                return s + rest, OK, n, 0.0
        elif n - i >= kmax:
            # no certified closed form reachable: geometric bound if the
            # ratio has been non-increasing, otherwise inconclusive
            r = f / (f + lam)
            if ratio_nonincr and r < 1.0:
                bound = prod * r / (1.0 - r)
                if bound <= tol * max(s, 1e-300):
                    return s, OK, n, bound
            return s, INCONCLUSIVE, n, math.inf
        r = f / (f + lam)
        if r > prev_r:
            ratio_nonincr = False
        prev_r = r
        prod *= r
        s += prod
        n += 1
        if s > 1e12:
            return math.inf, DIVERGENT, n, 0.0
        if prod >= prev_t:
            stalled += 1
            if stalled >= 1000:
                return math.inf, DIVERGENT, n, 0.0
        else:
            stalled = 0
        prev_t = prod
        if n < i0 and prod <= tol * s:
            if ratio_nonincr and r < 1.0 and prod * r / (1.0 - r) <= tol * s:
                return s, OK, n, prod * r / (1.0 - r)


@njit(cache=True)
def series_at_nodes(code, a, b, table, ext_zero, lam, kmax, tol):
    """``sum_{n>=1} S_n(w)`` at every node, with per-node status."""
    m = a.shape[0]
    out = np.empty(m)
    status = np.zeros(m, dtype=np.int64)
    reached = np.zeros(m, dtype=np.int64)
    err = np.zeros(m)
    for j in range(m):
        row = table[j] if code == 2 else table[0]
        v, st, n, e = node_remainder(code, a[j], b[j], row, ext_zero, lam, 0, 1.0, kmax, tol)
        out[j] = v
        status[j] = st
        reached[j] = n
        err[j] = e
    return out, status, reached, err


def per_weight_series(fm: FitnessModel, w, lam: float, kmax: int = K_MAX, tol: float = TERM_TOL):
    """``(values, status, terms, error)`` of ``sum_n S_n`` at weights ``w``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    code, a, b, table = fm.node_params(w)
    a = np.ascontiguousarray(np.broadcast_to(a, w.shape), dtype=float)
    b = np.ascontiguousarray(np.broadcast_to(b, w.shape), dtype=float)
    return series_at_nodes(code, a, b, table, fm.ext_zero, float(lam), int(kmax), float(tol))


@dataclass
class MalthusEvaluation:
    lam: float
    value: float
    terms_used: int
    tail_bound: float
    method: str  # "series" | "gpaf_closed_form"


def _gpaf_closed(dist, fm, lam, quad):
    g, h, ell = fm.g, fm.h, fm.ell

    def phi(w):
        gw, hw = g(w), h(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(hw == 0, 0.0, hw / (lam - gw))

    return ell * expect(dist, phi, quad)


def m_of_lambda(dist: WeightDistribution, fm: FitnessModel, lam: float,
                quad: QuadratureSpec = DEFAULT_QUAD, method: str = "auto",
                kmax: int = K_MAX, tol: float = TERM_TOL) -> MalthusEvaluation:
    """Evaluate ``m(lambda)``.

    ``method`` is "auto" (closed form for GPAF models, series otherwise),
    "series" or "closed".
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if method not in ("auto", "series", "closed"):
        raise ValueError(f"unknown method {method!r}")
    use_closed = fm.kind == "gpaf" and method != "series"
    if method == "closed" and fm.kind != "gpaf":
        raise ValueError("closed form exists for GPAF models only")
    if use_closed:
        gs = fm.ess_sup_g(dist)
        if lam <= gs:
            return MalthusEvaluation(lam, math.inf, 0, 0.0, "gpaf_closed_form")
        return MalthusEvaluation(lam, float(_gpaf_closed(dist, fm, lam, quad)), 0, 0.0,
                                 "gpaf_closed_form")

    info = {"terms": 0, "err": 0.0, "inconclusive": []}

    def phi(w):
        vals, status, reached, err = per_weight_series(fm, w, lam, kmax, tol)
        info["terms"] = max(info["terms"], int(reached.max(initial=0)))
        finite = np.isfinite(err)
        if finite.any():
            info["err"] = max(info["err"], float(np.max(err[finite])))
        bad = status == INCONCLUSIVE
        if bad.any():
            info["inconclusive"].extend(w[bad][:5].tolist())
        return vals

    value = float(fm.ell * expect(dist, phi, quad))
    if info["inconclusive"] and math.isfinite(value):
        raise SeriesInconclusive(
            f"series for m({lam}) neither converged nor diverged within {kmax} terms",
            trace=info["inconclusive"])
    return MalthusEvaluation(lam, value, info["terms"], info["err"], "series")


# ---------------------------------------------------------------------------
# classification


@dataclass
class RegimeReport:
    regime: str
    alpha: float | None = None
    lambda_tilde: float = 0.0
    m_star: float | None = None
    z_limit: float = math.nan
    # hypothesis of the partition-function strong law: f <= C k + phi, C < alpha, E phi < inf
    z_limit_certified: bool = False
    trace: list = field(default_factory=list)

    @property
    def regime_constant(self) -> float:
        """``alpha`` in the classical regime, the condensation constant otherwise."""
        if self.regime == C1:
            return self.alpha
        if self.regime in (CONDENSATION, BOUNDARY):
            return self.lambda_tilde
        return math.inf

    def to_dict(self) -> dict:
        def enc(x):
            if x is None:
                return None
            if isinstance(x, float) and math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        d = {
            "regime": self.regime,
            "alpha": enc(self.alpha),
            "lambda_tilde": enc(self.lambda_tilde),
            "m_star": enc(self.m_star),
            "z_limit": enc(self.z_limit),
            "z_limit_certified": self.z_limit_certified,
        }
        return d


def generalized_alpha(dist: WeightDistribution, fm: FitnessModel,
                      quad: QuadratureSpec = DEFAULT_QUAD, tol: float = 1e-10) -> float:
    """``inf{lambda > 0 : m(lambda) < inf}``.

    Exploratory diagnostic for general fitness functions; for GPAF models it
    is ``esssup g`` (or infinity when ``E h(W)`` diverges).
    """
    if fm.kind == "gpaf":
        gs = fm.ess_sup_g(dist)
        if math.isinf(gs) or math.isinf(expect(dist, fm.h, quad)):
            return math.inf
        return gs
    lam_t, _ = _probe_finiteness(dist, fm, quad, tol)
    return lam_t


def _finite(dist, fm, lam, quad):
    try:
        return math.isfinite(m_of_lambda(dist, fm, lam, quad).value)
    except SeriesInconclusive:
        return None


def _probe_finiteness(dist, fm, quad, tol):
    """Locate the finiteness threshold of ``m`` by probing powers of two and
    bisecting the first sign change."""
    trace = []
    probes = [2.0 ** j for j in range(-40, 61)]
    prev = None
    for lam in probes:
        fin = _finite(dist, fm, lam, quad)
        trace.append((lam, fin))
        if fin is None:
            raise Inconclusive("cannot certify finiteness of m", trace)
        if fin:
            if prev is None:
                return 0.0, trace
            lo, hi = prev, lam
            while hi - lo > tol * hi:
                mid = 0.5 * (lo + hi)
                fm_mid = _finite(dist, fm, mid, quad)
                trace.append((mid, fm_mid))
                if fm_mid is None:
                    raise Inconclusive("cannot certify finiteness of m", trace)
                if fm_mid:
                    hi = mid
                else:
                    lo = mid
            return hi, trace
        prev = lam
    return math.inf, trace


def solve_malthusian(dist: WeightDistribution, fm: FitnessModel, tol: float = 1e-10,
                     quad: QuadratureSpec = DEFAULT_QUAD) -> RegimeReport:
    """Classify the model and, in the classical regime, solve ``m(alpha) = 1``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    fm.validate(dist)
    trace: list = []

    def m(lam):
        val = m_of_lambda(dist, fm, lam, quad).value
        trace.append((lam, val))
        return val

    if fm.kind == "gpaf":
        gs = fm.ess_sup_g(dist)
        if math.isinf(gs) or math.isinf(expect(dist, fm.h, quad)):
            return RegimeReport(DEGENERATE, None, math.inf, math.inf, math.inf, False, trace)
        lam_t = gs
        g, h, ell = fm.g, fm.h, fm.ell

        def at_threshold(w):
            gw, hw = g(w), h(w)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(hw == 0, 0.0, hw / (gs - gw))

        m_star = ell * expect(dist, at_threshold, quad)
    else:
        lam_t, ptrace = _probe_finiteness(dist, fm, quad, tol)
        trace.extend(ptrace)
        if math.isinf(lam_t):
            return RegimeReport(DEGENERATE, None, math.inf, math.inf, math.inf, False, trace)
        m_star = _generic_sup(m, lam_t)

    if m_star > 1.0 + tol:
        alpha = _bisect_root(m, lam_t, tol)
        env = fm.auto_envelope(dist)
        certified = env is not None and env.C < alpha and math.isfinite(expect(dist, env.phi, quad))
        # the generic probe stops at the first value above 1, which is not the supremum
        m_rep = float(m_star) if fm.kind == "gpaf" else None
        return RegimeReport(C1, alpha, lam_t, m_rep, alpha, certified, trace)
    regime = BOUNDARY if abs(m_star - 1.0) <= tol else CONDENSATION
    return RegimeReport(regime, None, lam_t, float(m_star), lam_t, fm.kind == "gpaf", trace)


def _generic_sup(m, lam_t):
    """``lim m(lambda)`` as lambda decreases to the threshold, stopping early
    once a value above 1 shows the classical regime."""
    base = max(lam_t, 1.0)
    val = math.nan
    for k in range(0, 53):
        lam = lam_t + base * 2.0 ** (-k)
        if lam <= lam_t:
            break
        val = m(lam)
        if val > 1.0:
            return val
    return val


def _polish(m, lo, hi, tol):
    """Best of the bracket midpoint and one secant step inside the bracket."""
    m_lo, m_hi = m(lo), m(hi)
    cands = [0.5 * (lo + hi)]
    if m_lo != m_hi:
        x = lo + (m_lo - 1.0) * (hi - lo) / (m_lo - m_hi)
        if lo <= x <= hi:
            cands.append(x)
    res = [(abs(m(x) - 1.0), x) for x in cands]
    best = min(res)
    if best[0] >= 10 * tol:
        return None
    return best[1]


def _bisect_root(m, lam_t, tol):
    # bracket: m(lo) > 1 > m(hi), m strictly decreasing on (lam_t, inf)
    if lam_t > 0:
        k = 1
        lo = lam_t * (1 + 2.0 ** -k)
        while not m(lo) > 1.0:
            k += 1
            if k > 60:
                raise Inconclusive("could not find lambda with m > 1 above the threshold")
            lo = lam_t * (1 + 2.0 ** -k)
        j = 0
        hi = lam_t * (1 + 2.0 ** j)
        while m(hi) >= 1.0:
            j += 1
            if j > 60:
                raise Inconclusive("doubling cap reached while bracketing the root")
            hi = lam_t * (1 + 2.0 ** j)
    else:
        x = 1.0
        if m(x) > 1.0:
            lo = x
            while m(x) > 1.0:
                lo = x
                x *= 2.0
                if x > 2.0 ** 60:
                    raise Inconclusive("doubling cap reached while bracketing the root")
            hi = x
        else:
            hi = x
            while not m(x) > 1.0:
                hi = x
                x *= 0.5
                if x < 2.0 ** -60:
                    raise Inconclusive("could not find lambda with m > 1")
            lo = x
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        val = m(mid)
        if val == 1.0:
            return mid
        if val > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            root = _polish(m, lo, hi, tol)
            if root is not None:
                return root
