"""Closed-form limit laws: degree tables, edge measures and their special cases.

With ``c`` the regime constant (``alpha`` classically, the top slope
``g(w*)`` under condensation),

    p_k(B) = E[ c/(f(k,W)+c) * prod_{i<k} f(i,W)/(f(i,W)+c) ; W in B ]

and the limiting edge measure of a bin is ``ell * E[sum_{n>=1} S_n(W) ; B]``
with ``S_n`` the products of :mod:`rif.malthus` evaluated at ``c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NotGPAF, RequiresCayley, UnsupportedRegime
from .fitness import FitnessModel
from .malthus import (BOUNDARY, C1, CONDENSATION, DEGENERATE, K_MAX, TERM_TOL, TINY, RegimeReport,
                      fit_value, node_remainder, per_weight_series)
from .weights import DEFAULT_QUAD, REALS, QuadratureSpec, WeightDistribution, expect

DEFAULT_KMAX = 10_000


@dataclass
class DegreeLawTable:
    bins: tuple
    k_max: int
    p: np.ndarray  # (k_max + 1, n_bins)
    regime_constant: float
    ell: int = 1
    # mass of k > k_max per bin
    tail_mass: np.ndarray = field(default=None)
    # sum_k k*ell*p_k over k <= k_max, and the exact remainder for k > k_max
    edge_partial: np.ndarray = field(default=None)
    edge_tail: np.ndarray = field(default=None)

    @property
    def marginal(self) -> np.ndarray:
        """``p_k`` over the union of the bins."""
        return self.p.sum(axis=1)

    @property
    def declared_tail(self) -> float:
        return float(np.sum(self.tail_mass))

    def edge_totals(self) -> np.ndarray:
        """Per-bin first moment ``sum_k k*ell*p_k(B)`` including the tail."""
        return self.edge_partial + self.edge_tail


@dataclass
class EdgeLawMeasure:
    bins: tuple
    continuous: np.ndarray  # per bin
    atom_at_wstar: float
    regime: str
    wstar: float
    continuous_total: float

    @property
    def total(self) -> float:
        return self.continuous_total + self.atom_at_wstar

    def bin_masses(self) -> np.ndarray:
        """Continuous mass per bin with the atom added to the bin holding ``w*``."""
        out = np.array(self.continuous, dtype=float)
        if self.atom_at_wstar:
            for j, b in enumerate(self.bins):
                if b.contains(self.wstar):
                    out[j] += self.atom_at_wstar
                    break
        return out


@njit(cache=True)
def _accumulate(code, a, b, table, ext_zero, c, wq, kmax, kmax_series, tol, p, out):
    # out = [tail_mass, edge_partial (without ell), edge_tail (without ell), status]
    for j in range(a.shape[0]):
        wj = wq[j]
        if wj == 0.0:
            continue
        row = table[j] if code == 2 else table[0]
        prod = 1.0
        for k in range(kmax + 1):
            f = fit_value(code, k, a[j], b[j], row, ext_zero)
            den = f + c
            pk = prod * c / den
            p[k] += wj * pk
            out[1] += wj * k * pk
            prod *= f / den
            if prod < TINY:
                prod = 0.0
                break
        if prod == 0.0:
            continue
        out[0] += wj * prod
        rem, st, n, e = node_remainder(code, a[j], b[j], row, ext_zero, c, kmax + 1, prod,
                                       kmax_series, tol)
        if st != 0:
            out[3] = max(out[3], st)
        out[2] += wj * (prod + rem + kmax * prod)


def _constant(report: RegimeReport, fm: FitnessModel) -> float:
    if report.regime == DEGENERATE:
        raise UnsupportedRegime("degenerate regime has no degree table; use degenerate_law")
    if report.regime in (CONDENSATION, BOUNDARY) and fm.kind != "gpaf":
        raise NotGPAF("the condensation-regime degree law is established for GPAF models only")
    return report.regime_constant


def degree_law(dist: WeightDistribution, fm: FitnessModel, report: RegimeReport, bins=None,
               k_max: int = DEFAULT_KMAX, quad: QuadratureSpec = DEFAULT_QUAD) -> DegreeLawTable:
    """Limiting ``p_k(B_j)`` for ``k = 0..k_max`` and every bin."""
    c = float(_constant(report, fm))
    bins = tuple(bins) if bins is not None else (REALS,)
    nb = len(bins)
    p = np.zeros((k_max + 1, nb))
    tail = np.zeros(nb)
    part = np.zeros(nb)
    rest = np.zeros(nb)
    for j, B in enumerate(bins):
        x, wq = dist.quadrature_rule(on=B, nodes=2 * quad.nodes, tail_nodes=2 * quad.tail_nodes)
        if not len(x):
            continue
        code, a, b, table = fm.node_params(x)
        a = np.ascontiguousarray(np.broadcast_to(a, x.shape), dtype=float)
        b = np.ascontiguousarray(np.broadcast_to(b, x.shape), dtype=float)
        col = np.zeros(k_max + 1)
        out = np.zeros(4)
        _accumulate(code, a, b, table, fm.ext_zero, c, np.ascontiguousarray(wq), int(k_max),
                    K_MAX, TERM_TOL, col, out)
        p[:, j] = col
        tail[j], part[j], rest[j] = out[0], fm.ell * out[1], fm.ell * out[2]
    return DegreeLawTable(bins, k_max, p, c, fm.ell, tail, part, rest)


def edge_law(dist: WeightDistribution, fm: FitnessModel, report: RegimeReport, bins=None,
             quad: QuadratureSpec = DEFAULT_QUAD) -> EdgeLawMeasure:
    """Limiting proportion of edges pointing out of vertices with weight in each bin."""
    bins = tuple(bins) if bins is not None else (REALS,)
    wstar = dist.support_sup
    if report.regime == DEGENERATE:
        return EdgeLawMeasure(bins, np.zeros(len(bins)), 1.0, DEGENERATE, wstar, 0.0)
    c = float(_constant(report, fm))
    phi = _edge_density(fm, c)
    cont = np.array([expect(dist, phi, quad, on=B) for B in bins])
    total = float(expect(dist, phi, quad))
    if report.regime == C1:
        atom = 0.0
    else:
        atom = max(0.0, 1.0 - total)
    return EdgeLawMeasure(bins, cont, atom, report.regime, wstar, total)


def _edge_density(fm: FitnessModel, c: float):
    ell = fm.ell
    if fm.kind == "gpaf":
        g, h = fm.g, fm.h

        def phi(w):
            gw, hw = g(w), h(w)
            with np.errstate(divide="ignore", invalid="ignore"):
                return ell * np.where(hw == 0, 0.0, hw / (c - gw))
        return phi

    def phi_series(w):
        vals, _, _, _ = per_weight_series(fm, w, c)
        return ell * vals
    return phi_series


def degenerate_law(dist: WeightDistribution, bins) -> np.ndarray:
    """Limiting leaf law ``mu(B_j)`` when every vertex eventually stays a leaf."""
    return np.array([dist.mass(B) for B in bins])


def fermi_dirac_law(dist: WeightDistribution, beta: float, alpha: float, bins=None,
                    fitness: FitnessModel | None = None,
                    quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Active-vertex law ``E[1/(exp(beta*(e - mu_F)) + 1) ; B]`` with ``exp(beta*mu_F) = alpha``.

    ``dist`` is the law of the energies ``e``; the matching model is the
    Cayley tree with ``g(e) = exp(beta*e)``.
    """
    if fitness is not None and fitness.kind != "cayley":
        raise RequiresCayley("the Fermi-Dirac law describes Cayley-type fitness only")
    bins = tuple(bins) if bins is not None else (REALS,)

    def occupation(e):
        # alpha/(exp(beta e) + alpha) == 1/(exp(beta (e - mu_F)) + 1)
        return alpha / (np.exp(beta * np.asarray(e, dtype=float)) + alpha)

    return np.array([expect(dist, occupation, quad, on=B) for B in bins])


def wrrt_law(dist: WeightDistribution, ell: int = 1, k_max: int = 20, bins=None,
             quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Degree law of weighted random recursive trees (``f = w``) in closed form:
    ``p_k(B) = E[a W^k / (W + a)^(k+1) ; B]`` with ``a = ell*E[W]``."""
    bins = tuple(bins) if bins is not None else (REALS,)
    a = ell * expect(dist, lambda w: np.asarray(w, dtype=float), quad)
    out = np.zeros((k_max + 1, len(bins)))
    for k in range(k_max + 1):
        def pk(w, k=k):
            w = np.asarray(w, dtype=float)
            return a / (w + a) * (w / (w + a)) ** k
        for j, B in enumerate(bins):
            out[k, j] = expect(dist, pk, quad, on=B)
    return out


def power_law_exponent(fm: FitnessModel, report: RegimeReport, w: float) -> float:
    """Tail exponent ``1 + c/g(w)`` of the degree law of weight-``w`` vertices."""
    if fm.kind != "gpaf":
        raise NotGPAF("power-law exponent is defined for GPAF models")
    if report.regime not in (C1, CONDENSATION, BOUNDARY):
        raise UnsupportedRegime(f"no power law in the {report.regime} regime")
    gw = float(fm.g(np.array([w]))[0])
    if gw <= 0:
        return math.inf
    return 1.0 + report.regime_constant / gw


__all__ = [
    "DegreeLawTable", "EdgeLawMeasure", "degree_law", "edge_law", "degenerate_law",
    "fermi_dirac_law", "wrrt_law", "power_law_exponent",
]
