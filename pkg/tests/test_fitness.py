import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rif import fitness as F
from rif import weights as W
from rif.errors import InvalidSpec
from rif.expressions import affine, const, exp, identity, parse_expr, power, reciprocal
from rif.fitness import Envelope


class TestEval:
    def test_gpaf_affine(self):
        assert F.gpaf(const(1), const(1)).eval(3, 0.7) == 4.0

    def test_cayley(self):
        fm = F.cayley(identity())
        assert fm.eval(0, 2.5) == 2.5
        assert fm.eval(1, 2.5) == 0.0

    def test_constant_in_degree(self):
        assert F.constant_in_degree(identity()).eval(17, 0.3) == pytest.approx(0.3)

    def test_is_dead(self):
        assert F.cayley().is_dead(1, 1.0)
        assert not F.gpaf(const(1), const(1)).is_dead(5, 1.0)
        tab = F.tabular([const(1), const(1), const(0)], extension="clamp")
        assert tab.is_dead(2, 0.4)

    def test_tabular_extensions(self):
        rows = [const(2), identity(), affine(2, 1)]
        clamp = F.tabular(rows, "clamp")
        zero = F.tabular(rows, "zero")
        w = 0.3
        assert clamp.eval(1, w) == pytest.approx(0.3)
        for k in (3, 10, 1000):
            assert clamp.eval(k, w) == clamp.eval(2, w)
            assert zero.eval(k, w) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(k=st.integers(0, 10**6), w=st.floats(0, 0.999), a=st.floats(0, 5), b=st.floats(0.01, 5))
    def test_gpaf_matches_direct_formula(self, k, w, a, b):
        fm = F.gpaf(affine(a, b), exp(0.5))
        direct = (a * w + b) * k + math.exp(0.5 * w)
        got = float(fm.eval(k, w))
        assert abs(got - direct) <= 1e-12 * abs(direct)

    def test_vectorized(self):
        fm = F.gpaf(identity(), const(0.25))
        k = np.arange(5)[:, None]
        w = np.linspace(0, 1, 7)[None, :]
        assert fm.eval(k, w).shape == (5, 7)


class TestValidation:
    def test_nonpositive_root_fitness_rejected(self):
        with pytest.raises(InvalidSpec):
            F.gpaf(const(1), const(0)).validate(W.point_mass(1.0))

    def test_zero_on_null_set_allowed(self):
        # f(0, 0) = 0 but {0} has no uniform mass
        F.gpaf(identity(), identity()).validate(W.uniform())

    def test_negative_rejected(self):
        with pytest.raises(InvalidSpec):
            F.gpaf(affine(-1, 0), const(0.1)).validate(W.uniform())

    def test_non_monotone_gpaf_rejected(self):
        tent = parse_expr({"expr": "min", "args": [{"expr": "id"},
                                                   {"expr": "affine", "a": -1, "b": 1}]})
        with pytest.raises(InvalidSpec):
            F.gpaf(tent, const(1)).validate(W.uniform())
        F.gpaf(power(2), const(1)).validate(W.uniform())

    def test_envelope_checked(self):
        ok = F.gpaf(const(1), identity(), envelope=Envelope(1.0, identity()))
        ok.validate(W.uniform())
        bad = F.gpaf(const(2), identity(), envelope=Envelope(1.0, identity()))
        with pytest.raises(InvalidSpec):
            bad.validate(W.uniform())

    def test_unknown_keys_rejected(self):
        with pytest.raises(InvalidSpec):
            F.from_dict({"kind": "gpaf", "g": 1, "h": 1, "bogus": 2})
        with pytest.raises(InvalidSpec):
            F.from_dict({"kind": "gpaf", "g": {"expr": "id", "p": 3}, "h": 1})


class TestStructure:
    def test_ess_sup(self):
        assert F.gpaf(identity(), const(1)).ess_sup_g(W.uniform()) == 1.0
        assert F.gpaf(reciprocal(1), const(1)).ess_sup_g(W.uniform()) == math.inf
        assert F.gpaf(identity(), const(1)).ess_sup_g(W.exponential(1.0)) == math.inf
        assert F.gpaf(const(3), const(1)).ess_sup_g(W.exponential(1.0)) == 3.0

    def test_auto_envelope(self):
        env = F.gpaf(identity(), const(0.25)).auto_envelope(W.uniform())
        assert env.C == 1.0
        assert F.gpaf(reciprocal(1), const(1)).auto_envelope(W.uniform()) is None

    def test_h_scaling(self):
        fm = F.gpaf(identity(), const(0.5)).with_h_scaled(0.3)
        assert fm.eval(0, 0.2) == pytest.approx(0.15)
        fm2 = F.gpaf(identity(), identity()).with_h_scaled(2.0)
        assert fm2.eval(1, 0.25) == pytest.approx(0.25 + 0.5)

    @pytest.mark.parametrize("fm", [
        F.gpaf(identity(), const(0.25)),
        F.cayley(exp(1.0), ell=3),
        F.constant_in_degree(affine(1, 1)),
        F.tabular([const(1), identity()], "zero", ell=2),
        F.gpaf(const(1), identity(), envelope=Envelope(1.0, identity())),
    ])
    def test_roundtrip(self, fm):
        again = F.from_dict(fm.to_dict())
        assert again.to_dict() == fm.to_dict()
        k = np.arange(6)[:, None]
        w = np.linspace(0.05, 0.95, 5)[None, :]
        assert np.array_equal(again.eval(k, w), fm.eval(k, w))
