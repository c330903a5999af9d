import math

import pytest
from hypothesis import given, settings, strategies as st

from c3cert.polyalg import PolynomialError, basis, coefficients, from_basis, parse, var

VARS = ["x1", "x2", "y1"]
coef = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@st.composite
def polys(draw, max_deg=3):
    b = basis(VARS, max_deg)
    cs = draw(st.lists(coef, min_size=len(b), max_size=len(b)))
    return from_basis(b, cs)


points = st.fixed_dictionaries({v: st.floats(-2, 2, allow_nan=False) for v in VARS})


def test_parse_roundtrip_and_order():
    p = parse("3*x1^2*y1 - 2.5*x2 + 1")
    assert parse(p.to_string()) == p
    b = basis(["x1", "x2", "y1", "y2"], 3)
    assert len(b) == 35
    assert b.labels()[:6] == ["1", "x1", "x2", "y1", "y2", "x1^2"]
    assert len(basis(["x1", "x2"], 3)) == 10


def test_parse_errors():
    with pytest.raises(PolynomialError):
        parse("x1 +* 2")
    with pytest.raises(PolynomialError):
        coefficients(parse("x1^4"), basis(["x1"], 3))


@given(polys(), polys(), points)
@settings(max_examples=60, deadline=None)
def test_ring_laws_pointwise(p, q, pt):
    scale = 1 + abs(p.eval(pt)) * abs(q.eval(pt))
    assert abs((p * q).eval(pt) - p.eval(pt) * q.eval(pt)) <= 1e-9 * scale
    assert abs((p + q).eval(pt) - (p.eval(pt) + q.eval(pt))) <= 1e-9 * (1 + abs(p.eval(pt)) + abs(q.eval(pt)))


@given(polys(2), polys(1), polys(1), points)
@settings(max_examples=60, deadline=None)
def test_compose_eval_law(p, g1, g2, pt):
    sub = {"x1": g1, "x2": g2}
    lhs = p.compose(sub).eval(pt)
    inner = dict(pt, x1=g1.eval(pt), x2=g2.eval(pt))
    rhs = p.eval(inner)
    assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-9)


def test_coefficient_roundtrip():
    b = basis(["x1", "x2"], 3)
    cs = [float(k) for k in range(len(b))]
    assert coefficients(from_basis(b, cs), b) == cs


def test_power_and_degree():
    p = (var("x1") + 1) ** 3
    assert p.degree == 3
    assert p.eval({"x1": 2.0}) == 27.0
