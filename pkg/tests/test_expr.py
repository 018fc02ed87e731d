import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlab import expr
from crlab.expr import BinOp, Call, DivisionByZero, Neg, Num, ParseError, Pi, UnknownVariable, Var
from crlab.grid import GridSpec

leaves = st.one_of(
    st.integers(0, 1000).map(lambda k: Num(float(k))),
    st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num),
    st.sampled_from(["x", "y", "t"]).map(Var),
    st.just(Pi()),
)


def extend(children):
    return st.one_of(
        children.map(Neg),
        st.builds(Call, st.sampled_from(sorted(expr.FUNCTIONS)), children),
        st.builds(BinOp, st.sampled_from("+-*/"), children, children),
        st.builds(lambda b, k, neg: BinOp("^", b, Neg(Num(float(k))) if neg else Num(float(k))),
                  children, st.integers(0, 5), st.booleans()),
    )


trees = st.recursive(leaves, extend, max_leaves=12)


@settings(max_examples=200)
@given(trees)
def test_round_trip(node):
    assert expr.parse(expr.to_string(node)) == node


@pytest.mark.parametrize("src,value", [
    ("1 + 2 * 3", 7.0),
    ("(1 + 2) * 3", 9.0),
    ("-2^2", -4.0),
    ("2^-1", 0.5),
    ("2^3^1", None),
    ("8 / 4 / 2", 1.0),
    ("1 - 2 - 3", -4.0),
    ("sin(pi/2)", 1.0),
    ("exp(0) + cos(0)", 2.0),
    ("1.5e1", 15.0),
    (".5", 0.5),
    ("--1", 1.0),
])
def test_evaluate_literals(src, value):
    if value is None:
        with pytest.raises(ParseError):
            expr.parse(src)
        return
    assert expr.evaluate(expr.parse(src), {}) == pytest.approx(value)


def test_parse_error_offset_and_expected():
    with pytest.raises(ParseError) as err:
        expr.parse("sin(")
    assert err.value.offset == 4
    assert err.value.expected == {"number", "identifier", "(", "-"}


def test_parse_error_offset_counts_bytes():
    with pytest.raises(ParseError) as err:
        expr.parse("é + 1")
    assert err.value.offset == 0
    with pytest.raises(ParseError) as err:
        expr.parse("x + é")
    assert err.value.offset == 4


@pytest.mark.parametrize("src,offset", [("1 +", 3), ("(x", 2), ("x y", 2), ("2^x", 2), ("sin x", 4), ("", 0)])
def test_parse_error_offsets(src, offset):
    with pytest.raises(ParseError) as err:
        expr.parse(src)
    assert err.value.offset == offset


def test_unknown_variable():
    with pytest.raises(UnknownVariable):
        expr.evaluate(expr.parse("x + z"), {"x": 1.0})


@pytest.mark.parametrize("src", ["1/0", "1/(x - x)", "0^-2"])
def test_division_by_zero(src):
    with pytest.raises(DivisionByZero):
        expr.evaluate(expr.parse(src), {"x": np.arange(3.0)})


def test_variables():
    assert expr.variables(expr.parse("sin(x) * t + pi")) == {"x", "t"}


def test_eval_on_grid():
    spec = GridSpec((8, 8, 8))
    out = expr.eval_on_grid("0.1*sin(2*pi*x)*sin(2*pi*y)", spec)
    x, y = spec.coord(0), spec.coord(1)
    assert out.shape == spec.dims
    assert np.allclose(out, 0.1 * np.sin(2 * math.pi * x) * np.sin(2 * math.pi * y))
    assert np.all(expr.eval_on_grid("3", spec) == 3.0)


def test_eval_on_grid_rejects_overflow():
    with pytest.raises(expr.EvalError):
        expr.eval_on_grid("exp(1000*x)", GridSpec((8, 8, 8)))


@settings(max_examples=100)
@given(st.floats(-10, 10), st.floats(-10, 10))
def test_matches_python_arithmetic(a, b):
    env = {"x": a, "y": b}
    got = expr.evaluate(expr.parse("x*x - 3*y + (x - y)^2"), env)
    assert got == pytest.approx(a * a - 3 * b + (a - b) ** 2, rel=1e-12, abs=1e-12)
