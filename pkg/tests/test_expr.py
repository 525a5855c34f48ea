import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memodiff.errors import EvaluationError, ExprSyntaxError, UnknownIdentifier
from memodiff.expr import (
    CASE_A1,
    CASE_A2,
    CASE_A2_CONSTANT,
    CASE_NEITHER,
    Bin,
    Call,
    Neg,
    Num,
    Var,
    evaluate,
    parse,
    sample_profile,
    to_source,
)
from memodiff.grid import make_grid


def test_cubic_profile_values():
    ast = parse("-x^3+5")
    assert evaluate(ast, 0.0) == pytest.approx(5.0)
    assert evaluate(ast, math.pi) == pytest.approx(5 - math.pi**3, rel=1e-14)


def test_sine_profile():
    assert evaluate(parse("sin(x)+1"), 0.0) == pytest.approx(1.0)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("2*(")
    assert info.value.offset == 3


@pytest.mark.parametrize("src", ["", "   ", "1+", "(1", "sin x", "1 2", "x^", "*3"])
def test_malformed(src):
    with pytest.raises(ExprSyntaxError):
        parse(src)


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier) as info:
        parse("1 + tan(x)")
    assert info.value.name == "tan"
    assert info.value.offset == 4


def test_power_right_associative_and_unary():
    assert evaluate(parse("2^3^2"), 0.0) == pytest.approx(512.0)
    assert evaluate(parse("-x^2"), 3.0) == pytest.approx(-9.0)
    assert evaluate(parse("--x"), 3.0) == pytest.approx(3.0)
    assert evaluate(parse("2*-x"), 3.0) == pytest.approx(-6.0)


def test_whitespace_insignificant():
    a = evaluate(parse(" 5 * cos ( x ) + 0.3 "), np.linspace(0, 3, 7))
    b = evaluate(parse("5*cos(x)+0.3"), np.linspace(0, 3, 7))
    assert np.array_equal(a, b)


def test_case_tags():
    g = make_grid(n=201)
    cubic = sample_profile("-x^3+5", g)
    assert cubic.case == CASE_A1 and cubic.mean < 0
    sine = sample_profile("sin(x)+1", g)
    assert sine.case == CASE_A2
    assert sine.mean == pytest.approx(1 + 2 / math.pi, abs=1e-4)
    const = sample_profile("4", g)
    assert const.case == CASE_A2_CONSTANT and const.mean == pytest.approx(4.0)
    assert sample_profile("-1-x", g).case == CASE_NEITHER
    assert sample_profile("-2", g).case == CASE_NEITHER


def test_both_cosine_variants_supported():
    g = make_grid(n=201)
    for src in ("5*cos(x)+0.3", "5*cos(x)+0.2"):
        assert sample_profile(src, g).case == CASE_A2


def test_non_finite_evaluation():
    with pytest.raises(EvaluationError):
        sample_profile("1/x", make_grid(n=11))


# random trees for the round-trip and reference-interpreter properties

leaves = st.one_of(
    st.floats(-5, 5, allow_nan=False).map(lambda v: Num(float(v))),
    st.just(Var()),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: Bin(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "abs"]), children).map(lambda t: Call(*t)),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


def reference(node, x):
    """Plain recursive interpreter on Python floats."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -reference(node.arg, x)
    if isinstance(node, Call):
        return {"sin": math.sin, "cos": math.cos, "abs": abs, "exp": math.exp}[node.fn](reference(node.arg, x))
    a, b = reference(node.left, x), reference(node.right, x)
    return {"+": a + b, "-": a - b, "*": a * b}[node.op]


@given(trees)
def test_round_trip(tree):
    xs = np.random.default_rng(0).uniform(-3, 3, 1000)
    again = parse(to_source(tree))
    assert np.allclose(evaluate(again, xs), evaluate(tree, xs), rtol=1e-12, atol=1e-12, equal_nan=True)


@given(trees, st.floats(-3, 3))
def test_matches_reference_interpreter(tree, x):
    ref = reference(tree, x)
    got = float(evaluate(tree, x))
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)
