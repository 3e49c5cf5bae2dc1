import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from husimiflow.errors import BadAxis, ParseError
from husimiflow.symbols import (PolySymbol, format_poly, husimi_symbol, parse_poly, poly_derivative,
                                smoothing_operator)


def test_parse_basic_terms():
    s = parse_poly("0.5*p^2 + 0.25*x^4 - 3")
    assert s.terms == {(0, 2): 0.5, (4, 0): 0.25, (0, 0): -3.0}


def test_parse_repeated_variables_accumulate():
    assert parse_poly("x*x*p") == parse_poly("x^2*p")


def test_parse_two_dof_inferred():
    s = parse_poly("x1*p2 + x2^2")
    assert s.n_dof == 2
    assert s.terms == {(1, 0, 0, 1): 1.0, (0, 2, 0, 0): 1.0}


def test_parse_error_reports_offset():
    with pytest.raises(ParseError) as e:
        parse_poly("p^2/")
    assert e.value.offset == 3


def test_parse_error_on_dangling_operator():
    with pytest.raises(ParseError) as e:
        parse_poly("x + ")
    assert e.value.offset == 4


def test_parse_rejects_fractional_exponent():
    with pytest.raises(ParseError):
        parse_poly("x^1.5")


def test_bare_variables_need_one_dof():
    with pytest.raises(ParseError):
        parse_poly("x + p", n_dof=2)


def test_derivative_and_named_variable():
    s = parse_poly("x^3*p + p^2")
    assert poly_derivative(s, "x") == parse_poly("3*x^2*p")
    assert poly_derivative(s, "p") == parse_poly("x^3 + 2*p")
    with pytest.raises(BadAxis):
        poly_derivative(s, "q")


def test_shift_matches_pointwise_evaluation():
    s = parse_poly("x^3 - 2*x*p + p^2")
    d = (0.3, -1.1)
    pts = np.array([[0.1, 0.2], [1.5, -0.7]])
    assert np.allclose(s.shift(d).evaluate_at(pts), s.evaluate_at(pts + d))


def test_husimi_symbol_of_quadratic_adds_width(g64):
    h = husimi_symbol(parse_poly("x^2"), g64)
    wx = g64.widths[0][0]
    assert h.allclose(parse_poly("x^2") + wx**2)


def test_smoothing_operator_inverts():
    s = parse_poly("x^4 + x^2*p^2 - p^3")
    w = [(0.6, 0.5 / 0.6)]
    assert smoothing_operator(smoothing_operator(s, w), w, -1.0).allclose(s)


exps = st.tuples(st.integers(0, 4), st.integers(0, 4))
coefs = st.floats(-100, 100, allow_nan=False).filter(lambda c: c != 0)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(exps, coefs, min_size=1, max_size=6))
def test_format_parse_roundtrip(terms):
    s = PolySymbol(1, terms)
    assert parse_poly(format_poly(s), 1).allclose(s, atol=1e-9 * max(map(abs, terms.values())))


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(exps, coefs, min_size=1, max_size=4), st.dictionaries(exps, coefs, min_size=1, max_size=4))
def test_product_evaluates_pointwise(a, b):
    A, B = PolySymbol(1, a), PolySymbol(1, b)
    pts = np.array([[0.3, -0.4], [1.1, 0.9]])
    assert np.allclose((A * B).evaluate_at(pts), A.evaluate_at(pts) * B.evaluate_at(pts))


def test_degree_and_constant():
    s = parse_poly("2 + x*p^2")
    assert s.degree == 3
    assert s.constant_term() == 2.0
    assert math.isclose(s.evaluate_at([[1.0, 2.0]])[0], 6.0)
