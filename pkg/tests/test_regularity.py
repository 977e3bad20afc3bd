import math

import numpy as np
import pytest
from scipy.integrate import quad

from transport2d import oracles
from transport2d.characteristics import SolutionField, TransportProblem
from transport2d.expr import ScalarField, VectorField2
from transport2d.geometry import polygon
from transport2d.regularity import (H1Verdict, QuadratureError, green_residual, green_terms,
                                    h1_verdict, l2_integral, sign_inequality_check,
                                    volume_integral)


def square():
    return polygon([(0, 1), (1, 1), (1, 2), (0, 2)])


def test_l2_trivial():
    assert l2_integral(lambda x, y: 1.0, square()) == pytest.approx(1.0, abs=1e-3)
    assert l2_integral(lambda x, y: x, square()) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(ValueError):
        l2_integral(lambda x, y: 1.0, square(), n=8)


def test_l2_of_closed_form():
    ex = oracles.example(1)
    z = ex.z
    got = l2_integral(lambda x, y: z(x, y) ** 2, ex.domain)
    # separable: (9/25) int x^(4/3) dx * int (1 - (y/2)^(5/3))^2 dy
    oracle = 9 / 25 * 3 / 7 * quad(lambda y: (1 - (y / 2) ** (5 / 3)) ** 2, 1, 2, epsabs=1e-14)[0]
    assert got == pytest.approx(oracle, rel=1e-2)


def test_l2_reports_bad_samples():
    with pytest.raises(QuadratureError, match="non-finite"):
        l2_integral(lambda x, y: math.nan if x > 0.5 else 1.0, square())


def test_manufactured_smooth_solution_converges():
    # z = x^2 y with u = (x, -y), W = 1: l = z + u.grad z = x^2 y (1 + 2 - 1)
    z = ScalarField.parse("x^2*y")
    for point in ((0.0, 1.5), (0.5, 2.0), (1.0, 1.0)):
        assert h1_verdict(square(), z, point, 0.25).verdict == H1Verdict.CONVERGENT
    # grad z = (2, 1/4) at (0.5, 2): the half-annulus area drops by 4 per halving
    rep = h1_verdict(square(), z, (0.5, 2.0), 0.25)
    assert all(abs(r - 0.25) < 0.02 for r in rep.ratios[-4:])
    smaller = h1_verdict(square(), z, (0.5, 2.0), 0.125)
    assert smaller.cumulative[-1] == pytest.approx(rep.cumulative[-1] / 4, rel=0.1)


def test_square_root_layer_diverges():
    ex = oracles.example(2)
    L = ex.h1_locus
    rep = h1_verdict(ex.domain, ex.z, L.center, L.r0, L.along)
    assert rep.verdict == H1Verdict.DIVERGENT_LOG
    assert all(0.8 <= r <= 1.25 for r in rep.ratios[-4:])


def test_h1_needs_boundary_point():
    with pytest.raises(ValueError):
        h1_verdict(square(), ScalarField.parse("x"), (0.5, 1.5), 0.1)


def test_h1_marks_failed_annuli():
    rep = h1_verdict(square(), lambda x, y: math.nan, (0.0, 1.5), 0.25)
    assert rep.failed == tuple(range(8))
    assert rep.verdict == H1Verdict.INCONCLUSIVE


def test_report_rows():
    rep = h1_verdict(square(), ScalarField.parse("x^2*y"), (0.0, 1.5), 0.25)
    rows = rep.csv_rows()
    assert [r[0] for r in rows] == list(range(8))
    assert rows[-1][3] == pytest.approx(sum(rep.annulus_integrals))
    assert rep.radii == tuple(0.25 * 2.0 ** -k for k in range(9))


def test_green_divergence_theorem():
    u = VectorField2.parse("x", "-y")
    t = green_terms(lambda x, y: 1.0 + 0 * x, ScalarField.parse("1"), u, square())
    assert abs(t.volume) <= 1e-12
    assert t.residual <= 1e-3


def test_green_linear_pair():
    u = VectorField2.parse("x", "-y")
    # z = x, phi = y: volume x(-y) + y x = 0 and the boundary terms cancel
    t = green_terms(lambda x, y: x, ScalarField.parse("y"), u, square())
    assert t.volume == pytest.approx(0.0, abs=1e-9)
    assert t.boundary == pytest.approx(0.0, abs=1e-12)
    assert t.residual <= 1e-3


def test_green_with_computed_solution():
    ex = oracles.example(1)
    z = SolutionField(TransportProblem(ex.domain, ex.u, ex.l, ex.W))
    phi = ScalarField.parse("x*(1-x)")
    r16 = green_residual(z, phi, ex.u, ex.domain, 16)
    r32 = green_residual(z, phi, ex.u, ex.domain, 32)
    assert r32 <= 5e-3
    assert r32 <= 0.5 * r16


def test_sign_inequality_zero_field():
    assert sign_inequality_check(lambda x, y: 0 * x, VectorField2.parse("x", "-y"), 1.0,
                                 square()) == 0.0


def test_sign_inequality_with_solution():
    ex = oracles.example(1)
    z = SolutionField(TransportProblem(ex.domain, ex.u, ex.l, ex.W))
    v = sign_inequality_check(z, ex.u, ex.W, ex.domain, 16)
    assert v >= -1e-6 * (1 + abs(v))
    # the equation turns it into int (l - z) z
    zl = volume_integral(lambda x, y: (ex.l.array(x, y) - z(x, y)) * z(x, y), ex.domain, 16)
    assert v == pytest.approx(zl, rel=1e-4)


def test_sign_inequality_reversed_flow():
    ex = oracles.example(1)
    p = TransportProblem(ex.domain, ex.u, ex.l, -1.0)
    z = SolutionField(p)
    v = sign_inequality_check(z, ex.u, -1.0, ex.domain, 16)
    assert v > 0
