import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grushin.polynomial import Polynomial, PolynomialParseError, poly_eval


def test_eval_examples():
    assert poly_eval(Polynomial.parse("x1*x2", 3), [2, 3, 7]) == 6
    assert poly_eval(Polynomial.parse("1", 2), [0.3, -4]) == 1
    assert poly_eval(Polynomial.parse("x1^2 - x2", 2), [3, 9]) == 0


def test_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        poly_eval(Polynomial.parse("x1", 2), [1.0])


def test_zero_terms_dropped():
    p = Polynomial.parse("x1 - x1 + 2*x2", 2)
    assert p.terms == {(0, 1): 2}
    assert (Polynomial.parse("x1", 1) - Polynomial.parse("x1", 1)).is_zero()


@pytest.mark.parametrize("text, pos", [("x1^", 3), ("2*", 2), ("x3", 0), ("x1 + + x2", 5)])
def test_parse_errors_report_position(text, pos):
    with pytest.raises(PolynomialParseError) as info:
        Polynomial.parse(text, 2)
    assert info.value.position == pos


def test_diff_and_string_round_trip():
    p = Polynomial.parse("x1^2 - 3*x1*x2 + 0.5", 2)
    assert p.diff(0) == Polynomial.parse("2*x1 - 3*x2", 2)
    assert p.diff(1) == Polynomial.parse("-3*x1", 2)
    assert Polynomial.parse(p.to_string(), 2) == p


def test_vectorized_call():
    p = Polynomial.parse("x1*x2 + 1", 2)
    pts = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_array_equal(p(pts), [3.0, -2.0])


def _polys(n):
    term = st.tuples(st.tuples(*[st.integers(0, 2)] * n), st.integers(-3, 3))
    return st.lists(term, max_size=4).map(lambda ts: Polynomial(dict(ts), n))


@settings(max_examples=60, deadline=None)
@given(_polys(2), _polys(2), st.tuples(st.integers(-3, 3), st.integers(-3, 3)))
def test_ring_operations_match_evaluation(p, q, x):
    x = np.array(x, dtype=float)
    assert (p * q)(x) == pytest.approx(p(x) * q(x))
    assert (p + q)(x) == pytest.approx(p(x) + q(x))
    assert all(c != 0 for c in (p * q).terms.values())


@settings(max_examples=60, deadline=None)
@given(_polys(3))
def test_string_round_trip_property(p):
    assert Polynomial.parse(p.to_string(), 3) == p
