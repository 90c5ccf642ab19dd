"""Polynomial arithmetic, Lie derivatives, interval bounds, packing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clfsynth.poly import Box, Monomial, Polynomial


def poly_strategy(n=3, max_terms=5, max_deg=3):
    mono = st.dictionaries(
        st.integers(0, n - 1), st.integers(1, max_deg), max_size=n
    )
    term = st.tuples(mono, st.floats(-5, 5, allow_nan=False))
    return st.lists(term, min_size=0, max_size=max_terms).map(
        lambda ts: sum(
            (Polynomial.monomial(m, c) for m, c in ts), Polynomial.zero()
        )
    )


def point_strategy(n=3):
    return st.lists(
        st.floats(-2, 2, allow_nan=False), min_size=n, max_size=n
    ).map(np.array)


class TestMonomial:
    def test_product_adds_exponents(self):
        a = Monomial({0: 1, 1: 2})
        b = Monomial({1: 1, 2: 3})
        assert dict((a * b).powers) == {0: 1, 1: 3, 2: 3}

    def test_degree(self):
        assert Monomial({0: 2, 2: 3}).degree == 5
        assert Monomial().degree == 0

    def test_grlex_ordering_sorts_by_degree_first(self):
        monos = [Monomial({0: 3}), Monomial(), Monomial({1: 1})]
        ordered = sorted(monos, key=lambda m: m.grlex_key())
        assert [m.degree for m in ordered] == [0, 1, 3]


class TestArithmetic:
    @given(poly_strategy(), poly_strategy(), point_strategy())
    @settings(max_examples=60, deadline=None)
    def test_add_matches_pointwise(self, p, q, x):
        assert (p + q).eval(x) == pytest.approx(
            p.eval(x) + q.eval(x), rel=1e-9, abs=1e-9
        )

    @given(poly_strategy(), poly_strategy(), point_strategy())
    @settings(max_examples=60, deadline=None)
    def test_mul_matches_pointwise(self, p, q, x):
        assert (p * q).eval(x) == pytest.approx(
            p.eval(x) * q.eval(x), rel=1e-6, abs=1e-6
        )

    @given(poly_strategy(), point_strategy())
    @settings(max_examples=40, deadline=None)
    def test_scale_and_neg(self, p, x):
        assert p.scale(-1.0).eval(x) == pytest.approx((-p).eval(x))
        assert p.scale(2.5).eval(x) == pytest.approx(2.5 * p.eval(x))

    def test_zero_terms_are_dropped(self):
        p = Polynomial.monomial({0: 1}, 1.0) + Polynomial.monomial({0: 1}, -1.0)
        assert p.is_zero()

    def test_coeff_l1(self):
        p = Polynomial.monomial({0: 2}, 3.0) + Polynomial.monomial({1: 1}, -4.0)
        assert p.coeff_l1() == pytest.approx(7.0)


class TestCalculus:
    def test_partial_power_rule(self):
        p = Polynomial.monomial({0: 3}, 2.0)  # 2 x^3
        d = p.partial(0)
        assert d.eval(np.array([2.0])) == pytest.approx(24.0)  # 6 x^2

    def test_partial_unused_variable_is_zero(self):
        p = Polynomial.monomial({0: 2})
        assert p.partial(1).is_zero()

    @given(poly_strategy(n=2), poly_strategy(n=2), point_strategy(n=2))
    @settings(max_examples=40, deadline=None)
    def test_partial_product_rule(self, p, q, x):
        lhs = (p * q).partial(0).eval(x)
        rhs = p.partial(0).eval(x) * q.eval(x) + p.eval(x) * q.partial(0).eval(x)
        assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-6)

    def test_lie_derivative_linear_field(self):
        # V = x^2 + y^2 along (y, -x): Vdot = 2xy - 2xy = 0.
        V = Polynomial.monomial({0: 2}) + Polynomial.monomial({1: 2})
        field = [Polynomial.monomial({1: 1}), Polynomial.monomial({0: 1}, -1.0)]
        assert V.lie_derivative(field).is_zero()

    def test_lie_derivative_decay(self):
        # V = x^2 along xdot = -x: Vdot = -2x^2.
        V = Polynomial.monomial({0: 2})
        vdot = V.lie_derivative([Polynomial.monomial({0: 1}, -1.0)])
        assert vdot.eval(np.array([3.0])) == pytest.approx(-18.0)


class TestInterval:
    @given(poly_strategy(n=2), st.data())
    @settings(max_examples=60, deadline=None)
    def test_interval_eval_encloses_samples(self, p, data):
        box = Box([-1.5, -0.5], [0.5, 2.0])
        lo, hi = p.interval_eval(box)
        x = np.array([
            data.draw(st.floats(-1.5, 0.5)),
            data.draw(st.floats(-0.5, 2.0)),
        ])
        v = p.eval(x)
        assert lo - 1e-9 <= v <= hi + 1e-9

    def test_interval_even_power_nonnegative(self):
        p = Polynomial.monomial({0: 2})
        lo, hi = p.interval_eval(Box([-2.0], [1.0]))
        assert lo >= 0.0
        assert hi == pytest.approx(4.0)


class TestPackJson:
    @given(poly_strategy(), point_strategy())
    @settings(max_examples=40, deadline=None)
    def test_pack_eval_agreement(self, p, x):
        coeffs, exps = p.pack(3)
        direct = p.eval(x)
        packed = sum(
            c * np.prod(x ** e) for c, e in zip(coeffs, exps)
        )
        assert packed == pytest.approx(direct, rel=1e-9, abs=1e-9)

    @given(poly_strategy())
    @settings(max_examples=40, deadline=None)
    def test_json_round_trip(self, p):
        variables = ["x", "y", "z"]
        assert Polynomial.from_json(p.to_json(variables), variables) == p


class TestBox:
    def test_vertices_count(self):
        assert Box([-1, -1, -1], [1, 1, 1]).vertices().shape == (8, 3)

    def test_contains(self):
        box = Box([-1, 0], [1, 2])
        assert box.contains([0.0, 1.0])
        assert not box.contains([0.0, 2.5])
        assert box.contains([0.0, 2.1], tol=0.2)

    def test_sample_inside(self):
        box = Box([-3, 1], [-1, 4])
        X = box.sample(np.random.default_rng(0), 100)
        assert np.all(X >= [-3, 1]) and np.all(X <= [-1, 4])

    def test_radius(self):
        assert Box([-2, -1], [1, 1]).radius() == pytest.approx(2.0)
