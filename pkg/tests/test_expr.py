import math

import numpy as np
import pytest
import sympy
from hypothesis import assume, given, strategies as st

from geophase import expr as ex
from geophase.errors import (
    DomainError,
    NonDifferentiableError,
    ParseError,
    UnboundParameterError,
    UnknownFunctionError,
)
from treegen import fd_gradient, gradient_check, gradient_ok, trees


def at(x=0.0, y=0.0, z=0.0, **params):
    return ex.EvalPoint(x, y, z, params)


# --- parsing -------------------------------------------------------------------

def test_parse_sum_of_power():
    assert ex.parse("x^2+z") == ex.Add(ex.Pow(ex.Var("x"), 2), ex.Var("z"))


def test_parse_cheb_call():
    node = ex.parse("cheb(3, x/sqrt(x^2+y^2))")
    assert isinstance(node, ex.Cheb) and node.order == 3
    assert node.arg == ex.Div(ex.Var("x"), ex.Unary("sqrt", ex.parse("x^2 + y^2")))


def test_parse_error_offset():
    with pytest.raises(ParseError) as info:
        ex.parse("x + * y")
    assert info.value.position == 4
    assert "offset 4" in str(info.value)


@pytest.mark.parametrize("text", ["", "   ", "x +", "(x", "x)", "x ^ y", "cheb(x, y)",
                                  "cheb(2.5, x)", "2 3", "x ^ 1.5", "@"])
def test_parse_rejects(text):
    with pytest.raises(ParseError):
        ex.parse(text)


def test_unknown_function():
    with pytest.raises(UnknownFunctionError):
        ex.parse("tan(x)")


def test_precedence():
    # pow binds tighter than unary minus, which binds tighter than * and /
    assert ex.evaluate(ex.parse("-x^2"), at(3)) == -9
    assert ex.evaluate(ex.parse("2*x^2 - y/2"), at(3, 4)) == 16
    assert ex.evaluate(ex.parse("x - y - z"), at(1, 2, 3)) == -4
    assert ex.evaluate(ex.parse("x / y / z"), at(8, 2, 2)) == 2
    assert ex.evaluate(ex.parse("x^-2"), at(2)) == 0.25
    assert ex.evaluate(ex.parse("1.5e-3 * x"), at(2)) == pytest.approx(3e-3)


def test_parameters_collected():
    assert ex.parameters(ex.parse("a*x + b^2 - sin(c*y)")) == {"a", "b", "c"}


@given(trees())
def test_print_parse_round_trip(node):
    text = ex.to_string(node)
    again = ex.parse(text)
    assert ex.to_string(again) == text
    assert ex.parse(ex.to_string(again)) == again


@pytest.mark.parametrize("text", ["x^2+z", "-(x - y)^3", "cheb(4, 0.5*sin(x))", "a/(b*c)",
                                  "x - (y - z)", "-x*-y", "sgn(abs(x)) - -2.5"])
def test_round_trip_examples(text):
    node = ex.parse(text)
    assert ex.parse(ex.to_string(node)) == node


# --- evaluation -----------------------------------------------------------------

def test_evaluate_examples():
    assert ex.evaluate(ex.parse("x^2+z"), at(2, 0, 1)) == 5
    assert ex.evaluate(ex.parse("cheb(2, q)"), at(q=0.5)) == pytest.approx(-0.5, abs=1e-15)


def test_domain_errors():
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("sqrt(x)"), at(-1))
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("1/x"), at(0))
    with pytest.raises(DomainError):
        ex.evaluate(ex.parse("cheb(3, x)"), at(1.0 + 1e-9))
    # roundoff-sized excursions are absorbed
    assert ex.evaluate(ex.parse("cheb(3, x)"), at(1.0 + 1e-13)) == pytest.approx(1.0)


def test_unbound_parameter():
    with pytest.raises(UnboundParameterError):
        ex.evaluate(ex.parse("a*x"), at(1))


def test_sgn_and_abs_values():
    assert ex.evaluate(ex.parse("sgn(x)"), at(0)) == 0
    assert ex.evaluate(ex.parse("sgn(x)"), at(-2)) == -1
    assert ex.evaluate(ex.parse("abs(x)"), at(-2)) == 2


def test_broadcast_evaluation():
    xs = np.linspace(-1, 1, 7)
    val = ex.evaluate(ex.parse("x^2 + y"), ex.EvalPoint(xs, 1.0, 0.0, {}))
    np.testing.assert_allclose(val, xs ** 2 + 1)


def test_chebyshev_identity():
    t = np.linspace(0, math.pi, 1000)
    for n in range(17):
        np.testing.assert_allclose(ex.chebyshev(n, np.cos(t)), np.cos(n * t), rtol=0, atol=1e-12)


def test_chebyshev_matches_sympy():
    q = sympy.Symbol("q")
    for n in range(9):
        poly = sympy.chebyshevt(n, q)
        dpoly = sympy.diff(poly, q)
        for v in (-1.0, -0.3, 0.0, 0.71, 1.0):
            assert ex.chebyshev(n, v) == pytest.approx(float(poly.subs(q, v)), abs=1e-13)
            assert ex.chebyshev_derivative(n, v) == pytest.approx(float(dpoly.subs(q, v)), abs=1e-12)


# --- derivatives ----------------------------------------------------------------

def test_gradient_examples():
    assert ex.gradient(ex.parse("x^2+z"), at(3, 0, 0)) == (6, 0, 1)
    _, d = ex.value_and_derivatives(ex.parse("cheb(3, q)"), at(q=0.0), wrt=("q",))
    assert d[0] == pytest.approx(-3.0)
    node = ex.parse("x*y")
    fd = fd_gradient(node, (1.0, 2.0, 0.0), {})
    np.testing.assert_allclose(ex.gradient(node, at(1, 2)), fd, rtol=1e-8)


def test_gradient_matches_sympy():
    x, y, z = sympy.symbols("x y z")
    text = "sin(x*y)^2/(1 + z^2) - sqrt(1 + x^2)*cos(y) + cheb(3, 0.5*x)"
    node = ex.parse(text)
    sym = (sympy.sin(x * y) ** 2 / (1 + z ** 2) - sympy.sqrt(1 + x ** 2) * sympy.cos(y)
           + sympy.chebyshevt(3, x / 2))
    point = {x: 0.3, y: -0.7, z: 0.45}
    want = [float(sympy.diff(sym, v).subs(point)) for v in (x, y, z)]
    np.testing.assert_allclose(ex.gradient(node, at(0.3, -0.7, 0.45)), want, rtol=1e-13)


def test_non_differentiable_points():
    for text in ("sqrt(x)", "abs(x)", "sgn(x)"):
        node = ex.parse(text)
        ex.evaluate(node, at(0))  # values are fine
        with pytest.raises(NonDifferentiableError):
            ex.gradient(node, at(0))


def test_cheb_derivative_finite_at_interval_ends():
    node = ex.parse("cheb(4, x)")
    assert ex.gradient(node, at(1.0))[0] == pytest.approx(16.0)
    assert ex.gradient(node, at(-1.0))[0] == pytest.approx(-16.0)


def test_parameter_derivative():
    _, d = ex.value_and_derivatives(ex.parse("a*x^2"), at(3, a=2.0), wrt=("x", "a"))
    np.testing.assert_allclose(d, [12.0, 9.0])


points = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3)


@given(trees(), points, st.floats(-1, 1))
def test_gradient_matches_central_differences(node, point, a):
    assert gradient_ok(node, point, {"a": a})


@given(trees(), points)
def test_gradient_relative_error_where_oracle_resolves_it(node, point):
    err, size, oracle = gradient_check(node, point, {"a": 0.25})
    assume(oracle <= 1e-8 * size)
    assert err <= 1e-6 * size


@given(trees(max_depth=3), points)
def test_batched_equals_pointwise(node, point):
    base = np.array(point)
    batch = base + np.linspace(0, 0.1, 4)[:, None]
    val, der = ex.value_and_derivatives(node, ex.EvalPoint(*batch.T, {"a": 0.5}))
    for i, p in enumerate(batch):
        v1, d1 = ex.value_and_derivatives(node, ex.EvalPoint(*p, {"a": 0.5}))
        assume(np.isfinite(v1))
        assert val[i] == pytest.approx(float(v1), rel=1e-14, abs=1e-300)
        np.testing.assert_allclose(der[:, i], d1, rtol=1e-13, atol=1e-300)
