import math

import numpy as np
import pytest

from transport2d.expr import (DivergenceError, ExprDomainError, ExprSyntaxError, ScalarField,
                              UnknownIdentifier, VectorField2, differentiate, evaluate,
                              parse_expression, to_string)


def ev(text, x, y):
    return evaluate(parse_expression(text), (x, y))


def test_arithmetic_and_precedence():
    assert ev("x*y^2 + y", 2, 3) == 21
    assert ev("2^3^2", 0, 0) == 512          # right associative
    assert ev("-2^2", 0, 0) == -4
    assert ev("1 - 2 - 3", 0, 0) == -4
    assert ev("8/2/2", 0, 0) == 2


def test_normal_velocity_on_top_edge():
    u2 = parse_expression("-y")
    # u.n with n = (0, 1) on the top side y = 2
    assert evaluate(u2, (0.5, 2.0)) == -2.0


def test_triangle_closed_form_value():
    assert ev("1 - 2*y/(1+sqrt(1+4*x*y))", 0.25, 0.6) == pytest.approx(0.470178, abs=1e-6)


def test_cubic_root_profile_value():
    v = ev("((x*y^2+y-1/9)/3)^(1/3)+1/3", -1, 0.5)
    assert v == pytest.approx(0.692405, abs=1e-6)


def test_fractional_power_at_zero():
    assert ev("x^(2/3)", 0.0, 0.0) == 0.0
    assert ev("x^(2/3)", 1.0, 1.5) == 1.0


@pytest.mark.parametrize("text, var, at, expected", [
    ("x*y^2+y", "x", (2, 3), 9.0),
    ("-y", "y", (0.3, -7.0), -1.0),
    ("2*x*y+1", "y", (-2, 1 / 3), -4.0),
    ("sin(x)*exp(y)", "x", (0.0, 0.0), 1.0),
    ("ln(x)", "x", (4.0, 0.0), 0.25),
    ("arctan(y)", "y", (0.0, 1.0), 0.5),
    ("abs(x)", "x", (-3.0, 0.0), -1.0),
])
def test_differentiate(text, var, at, expected):
    d = differentiate(parse_expression(text), var)
    assert evaluate(d, at) == pytest.approx(expected, rel=1e-14)


def test_abs_derivative_undefined_at_zero():
    d = differentiate(parse_expression("abs(x)"), "x")
    with pytest.raises(ExprDomainError):
        evaluate(d, (0.0, 1.0))


def test_syntax_errors_carry_offsets():
    with pytest.raises(ExprSyntaxError) as e:
        parse_expression("x + * y")
    assert e.value.offset == 4
    with pytest.raises(UnknownIdentifier) as e:
        parse_expression("x + foo(y)")
    assert e.value.offset == 4
    with pytest.raises(ExprSyntaxError):
        parse_expression("(x + y")


def test_domain_errors_name_the_subexpression():
    with pytest.raises(ExprDomainError, match="sqrt"):
        ev("1 + sqrt(x)", -1.0, 0.0)
    with pytest.raises(ExprDomainError, match="ln"):
        ev("ln(x - 1)", 0.5, 0.0)
    with pytest.raises(ExprDomainError):
        ev("1/(x-y)", 1.0, 1.0)
    with pytest.raises(ExprDomainError):
        ev("(-x)^(1/3)", 1.0, 0.0)


def test_array_evaluation_reports_domain_errors():
    f = ScalarField.parse("sqrt(x)")
    with pytest.raises(ExprDomainError):
        f.array(np.array([1.0, -1.0]), np.array([0.0, 0.0]))


EXPRESSIONS = ["x*y^2 + y", "sqrt(1+4*x*y)", "exp(-x)*cos(y)", "arctan(x/y)",
               "((x*y^2+y-1/9)/3)^(1/3)+1/3", "ln(1+x^2) - sin(x*y)", "(x+2)^2/sqrt(10)"]


@pytest.mark.parametrize("text", EXPRESSIONS)
def test_print_round_trip(text, rng):
    a = parse_expression(text)
    b = parse_expression(to_string(a))
    pts = rng.uniform([0.1, 0.5], [1.5, 2.0], size=(100, 2))
    for p in pts:
        va, vb = evaluate(a, p), evaluate(b, p)
        assert abs(va - vb) <= 1e-15 * max(1.0, abs(va))


@pytest.mark.parametrize("text", EXPRESSIONS)
def test_symbolic_matches_central_difference(text, rng):
    f = ScalarField.parse(text)
    h = 1e-5
    pts = rng.uniform([0.1, 0.5], [1.5, 2.0], size=(100, 2))
    for x, y in pts:
        fx = (f(x + h, y) - f(x - h, y)) / (2 * h)
        fy = (f(x, y + h) - f(x, y - h)) / (2 * h)
        gx, gy = f.grad(x, y)
        assert abs(gx - fx) <= 1e-6 * (1 + abs(gx))
        assert abs(gy - fy) <= 1e-6 * (1 + abs(gy))


def test_divergence_gate():
    VectorField2.parse("x", "-y")
    VectorField2.parse("2*x*y+1", "-y^2")
    with pytest.raises(DivergenceError, match="divergence"):
        VectorField2.parse("x", "y")
    with pytest.raises(DivergenceError):
        VectorField2.parse("x^2", "y")


def test_fields_are_pure():
    f = ScalarField.parse("x*y")
    assert f(2.0, 3.0) == f(2.0, 3.0) == 6.0
    assert math.isclose(f.array(np.array([2.0]), np.array([3.0]))[0], 6.0)
