import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asymgame.expr import ExprError, eval_expr, parse_expr, pretty


def ev(text, y=0.0):
    return eval_expr(parse_expr(text), y)


@pytest.mark.parametrize("text, y, want", [
    ("1+2*3", 0.0, 7.0),
    ("tanh(y)", 0.0, 0.0),
    ("5", 123.0, 5.0),
    ("y", 2.5, 2.5),
    ("min(1, max(-1, y))", -3.0, -1.0),
    ("10 - 4 - 3", 0.0, 3.0),
    ("12 / 3 / 2", 0.0, 2.0),
    ("-y*-y", 3.0, 9.0),
    ("abs(sin(y)) + cos(0)", -math.pi / 2, 2.0),
])
def test_simple_values(text, y, want):
    assert ev(text, y) == pytest.approx(want, abs=1e-15)


def test_exp_of_minus_one():
    assert ev("exp(-(y*y))", 1.0) == pytest.approx(0.36787944117, abs=1e-11)


def test_array_evaluation_broadcasts():
    y = np.linspace(-1, 1, 7)
    np.testing.assert_array_equal(ev("3", y), np.full(7, 3.0))
    np.testing.assert_allclose(ev("y*y", y), y * y)


@pytest.mark.parametrize("text", ["", "  ", "1 +", "(1", "1 2", "foo(y)", "z", "exp(1, 2)", "max(1)", "3 $ 4"])
def test_syntax_errors(text):
    with pytest.raises(ExprError):
        parse_expr(text)


def test_error_carries_offset():
    with pytest.raises(ExprError) as info:
        parse_expr("1 + * 2")
    assert info.value.offset == 4


def test_division_by_zero_is_an_error():
    with pytest.raises(ExprError):
        ev("1 / (y - 1)", 1.0)
    with pytest.raises(ExprError):
        ev("1/y", np.array([1.0, 0.0]))


def test_non_finite_result_is_an_error():
    with pytest.raises(ExprError):
        ev("exp(y)", 1e4)


# -- generated corpus ----------------------------------------------------------

numbers = st.floats(min_value=0, max_value=100, allow_nan=False).map(lambda x: repr(round(x, 3)))
leaf = st.one_of(numbers, st.just("y"))


def _combine(children):
    binop = st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    unary = st.tuples(st.sampled_from(["tanh", "sin", "cos", "abs"]), children).map(lambda t: f"{t[0]}({t[1]})")
    binary = st.tuples(st.sampled_from(["min", "max"]), children, children).map(
        lambda t: f"{t[0]}({t[1]}, {t[2]})")
    neg = children.map(lambda s: f"-{s}")
    return st.one_of(binop, unary, binary, neg)


expressions = st.recursive(leaf, _combine, max_leaves=12)


@given(expressions)
def test_pretty_round_trip(text):
    e = parse_expr(text)
    assert parse_expr(pretty(e)) == e


@given(expressions, st.floats(min_value=-3, max_value=3))
def test_evaluation_is_bitwise_repeatable(text, y):
    e = parse_expr(text)
    a, b = eval_expr(e, y), eval_expr(e, y)
    assert np.float64(a).tobytes() == np.float64(b).tobytes()


@given(expressions, st.lists(st.floats(min_value=-3, max_value=3), min_size=1, max_size=5))
def test_array_matches_scalar(text, ys):
    e = parse_expr(text)
    vec = eval_expr(e, np.array(ys))
    np.testing.assert_array_equal(vec, [eval_expr(e, y) for y in ys])
