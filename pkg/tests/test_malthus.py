import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rif import fitness as F
from rif import weights as W
from rif.errors import InvalidSpec, SeriesInconclusive
from rif.expressions import affine, const, exp, identity, reciprocal
from rif.malthus import (BOUNDARY, C1, CONDENSATION, DEGENERATE, generalized_alpha, m_of_lambda,
                         per_weight_series, solve_malthusian)

from oracles import bb_alpha, bb_m

PM = W.point_mass(1.0)
U = W.uniform()
TRIANGLE = W.polynomial_density([2.0, -2.0])
PORT = F.gpaf(const(1), const(1))
BB = F.gpaf(identity(), identity())
COND = F.gpaf(identity(), const(0.25))

GPAF_FAMILIES = [
    ("port", PM, PORT),
    ("bb", U, BB),
    ("condensation", TRIANGLE, COND),
    ("additive", U, F.gpaf(const(1), affine(1, 1))),
    ("bb-ell2", U, F.gpaf(identity(), identity(), ell=2)),
    ("atoms", W.finite_atoms([0.5, 2.0], [0.4, 0.6]), F.gpaf(identity(), const(0.5), ell=3)),
]


class TestMOfLambda:
    def test_port_both_paths(self):
        assert m_of_lambda(PM, PORT, 2.0).value == pytest.approx(1.0, abs=1e-14)
        s = m_of_lambda(PM, PORT, 2.0, method="series")
        assert s.method == "series"
        assert s.value == pytest.approx(1.0, abs=1e-12)

    def test_constant_geometric(self):
        ev = m_of_lambda(PM, F.constant_in_degree(identity()), 2.0)
        assert ev.value == pytest.approx(0.5, abs=1e-14)
        assert ev.tail_bound <= 1e-12

    def test_bb_closed_form(self):
        for lam in (1.01, 1.2550009749159754, 2.0, 10.0):
            assert m_of_lambda(U, BB, lam).value == pytest.approx(bb_m(lam), rel=1e-11)

    def test_closed_form_only_above_threshold(self):
        ev = m_of_lambda(U, BB, 1.0)
        assert ev.value == math.inf
        assert m_of_lambda(U, BB, 0.5, method="series").value == math.inf

    def test_series_divergence_below_slope(self):
        assert m_of_lambda(PM, PORT, 0.9, method="series").value == math.inf

    @pytest.mark.parametrize("name,dist,fm", GPAF_FAMILIES, ids=[f[0] for f in GPAF_FAMILIES])
    def test_series_matches_closed_form(self, name, dist, fm):
        gs = fm.ess_sup_g(dist)
        for factor in (1.01, 1.3, 3.0):
            lam = gs * factor
            closed = m_of_lambda(dist, fm, lam).value
            series = m_of_lambda(dist, fm, lam, method="series").value
            assert abs(series - closed) <= 1e-6 * closed

    def test_ell_scaling_of_closed_form(self):
        # with the degree argument out-degree/ell, m scales linearly in ell
        fm1 = F.gpaf(identity(), identity(), ell=1)
        fm2 = F.gpaf(identity(), identity(), ell=2)
        for lam in (1.1, 2.5):
            assert m_of_lambda(U, fm2, lam).value == pytest.approx(2 * m_of_lambda(U, fm1, lam).value)

    @settings(max_examples=60, deadline=None)
    @given(l1=st.floats(1.001, 20), l2=st.floats(1.001, 20))
    def test_monotone(self, l1, l2):
        lo, hi = sorted((l1, l2))
        for dist, fm in ((U, BB), (PM, F.cayley(exp(1.0)))):
            a = m_of_lambda(dist, fm, lo).value
            b = m_of_lambda(dist, fm, hi).value
            assert a >= b
            if lo < hi * (1 - 1e-9):
                assert a > b

    def test_per_weight_series_cayley(self):
        vals, status, _, _ = per_weight_series(F.cayley(identity()), np.array([1.0, 2.0]), 1.0)
        assert np.allclose(vals, [0.5, 2.0 / 3.0])
        assert (status == 0).all()

    def test_inconclusive_is_reported(self):
        fm = F.tabular([const(1.0)] * 50 + [const(0.0)], "zero")
        with pytest.raises(SeriesInconclusive):
            m_of_lambda(PM, fm, 1e-3, kmax=10)

    def test_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            m_of_lambda(PM, PORT, 0.0)


class TestSolve:
    def test_port(self):
        rep = solve_malthusian(PM, PORT, 1e-10)
        assert rep.regime == C1
        assert abs(rep.alpha - 2.0) < 1e-9
        assert rep.z_limit == rep.alpha

    def test_bianconi_barabasi(self):
        rep = solve_malthusian(U, BB, 1e-10)
        assert rep.regime == C1
        assert abs(rep.alpha - bb_alpha()) < 1e-9
        assert abs(bb_m(rep.alpha) - 1.0) < 1e-9

    def test_condensation(self):
        rep = solve_malthusian(TRIANGLE, COND)
        assert rep.regime == CONDENSATION
        assert rep.alpha is None
        assert abs(rep.m_star - 0.5) < 1e-9
        assert rep.z_limit == 1.0

    def test_boundary(self):
        rep = solve_malthusian(TRIANGLE, F.gpaf(identity(), const(0.5)))
        assert rep.regime == BOUNDARY
        assert abs(rep.m_star - 1.0) < 1e-9

    @pytest.mark.parametrize("fm,dist", [
        (F.gpaf(reciprocal(1), const(1)), U),
        (F.gpaf(identity(), const(1)), W.exponential(1.0)),
        (F.gpaf(const(1), reciprocal(1)), U),
    ])
    def test_degenerate(self, fm, dist):
        rep = solve_malthusian(dist, fm)
        assert rep.regime == DEGENERATE
        assert rep.z_limit == math.inf

    def test_generic_families(self):
        assert solve_malthusian(PM, F.cayley(identity(), ell=2)).alpha == pytest.approx(1.0, abs=1e-9)
        assert solve_malthusian(PM, F.constant_in_degree()).alpha == pytest.approx(1.0, abs=1e-9)
        # weighted random recursive tree: alpha = ell * E[W]
        rep = solve_malthusian(U, F.constant_in_degree(identity(), ell=3))
        assert rep.alpha == pytest.approx(1.5, abs=1e-9)

    def test_ell_two_affine(self):
        # f = k + 1 with two children per event: Z_t = 3t + 1 exactly, so alpha = 3
        rep = solve_malthusian(PM, F.gpaf(const(1), const(1), ell=2))
        assert rep.alpha == pytest.approx(3.0, abs=1e-9)

    def test_tabular_matches_gpaf(self):
        # rows k+1 for k < 30, then clamped: a truncated linear model, solved by the series path
        rows = [const(k + 1.0) for k in range(30)]
        rep = solve_malthusian(PM, F.tabular(rows, "clamp"))
        assert rep.regime == C1
        assert abs(m_of_lambda(PM, F.tabular(rows, "clamp"), rep.alpha).value - 1.0) < 1e-9
        assert 1.9 < rep.alpha < 2.0

    @pytest.mark.parametrize("tol", [1e-6, 1e-8, 1e-10, 1e-12])
    def test_root_residual(self, tol):
        for dist, fm in ((U, BB), (PM, PORT), (W.finite_atoms([0.5, 2.0], [0.4, 0.6]),
                                                F.gpaf(identity(), const(0.5), ell=3))):
            rep = solve_malthusian(dist, fm, tol)
            assert abs(m_of_lambda(dist, fm, rep.alpha).value - 1.0) < 10 * tol

    def test_invalid_model_rejected(self):
        with pytest.raises(InvalidSpec):
            solve_malthusian(PM, F.gpaf(const(1), const(0)))

    def test_report_serializes(self):
        d = solve_malthusian(U, F.gpaf(reciprocal(1), const(1))).to_dict()
        assert d["regime"] == "Degenerate" and d["z_limit"] == "inf"


class TestGeneralizedAlpha:
    def test_gpaf(self):
        assert generalized_alpha(U, F.gpaf(identity(), const(1))) == 1.0

    def test_constant_in_degree(self):
        assert generalized_alpha(U, F.constant_in_degree(identity())) == 0.0

    def test_degenerate(self):
        assert generalized_alpha(U, F.gpaf(reciprocal(1), const(1))) == math.inf

    def test_generic_probe_agrees_with_gpaf(self):
        # the same linear model written as a long table reaches its clamp
        # before the probe needs it, so only a positive threshold is possible
        rows = [const(k + 1.0) for k in range(5)]
        assert generalized_alpha(PM, F.tabular(rows)) == 0.0
