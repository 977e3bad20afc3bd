"""The seven worked examples: domains, fields, closed-form solutions and the
expected outcome of every check, used as golden data by the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import elementwise

from .classify import Label, Verdict
from .expr import ScalarField, VectorField2
from .geometry import Arc, Domain, Segment, polygon

Point2 = tuple[float, float]

_TOL = dict(xatol=1e-15, xrtol=1e-15, fatol=0.0, frtol=0.0)


class OracleError(ValueError):
    pass


def invert_monotone(f: Callable, target, lo: float, hi: float) -> np.ndarray:
    """Solve f(y) = target elementwise on [lo, hi] for a monotone f."""
    target = np.asarray(target, dtype=float)
    flo, fhi = f(lo), f(hi)
    a, b = min(flo, fhi), max(flo, fhi)
    slack = 1e-13 * (1.0 + abs(a) + abs(b))
    if np.any(target < a - slack) or np.any(target > b + slack):
        raise OracleError(f"value outside the range [{a:.12g}, {b:.12g}] of the inverted map")
    target = np.clip(target, a, b)
    lo_a = np.full(target.shape, lo)
    hi_a = np.full(target.shape, hi)
    at_lo = target == flo
    at_hi = target == fhi
    res = elementwise.find_root(lambda y, t: f(y) - t, (lo_a, hi_a), args=(target,),
                                tolerances=_TOL)
    out = np.where(at_lo, lo, np.where(at_hi, hi, res.x))
    return out


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-15) -> float:
    """Plain bisection on a sign change of f over [lo, hi]."""
    flo = f(lo)
    if flo == 0:
        return lo
    if flo * f(hi) > 0:
        raise OracleError("no sign change on the bracket")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scalarize(fn):
    """Wrap an array closed form so scalar calls return a float."""
    def z(x, y):
        xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        out = fn(*np.broadcast_arrays(np.atleast_1d(xa), np.atleast_1d(ya)))
        if xa.ndim == 0 and ya.ndim == 0:
            return float(out[0])
        return out
    z.vectorized = True
    return z


@dataclass(frozen=True)
class H1Locus:
    """Where the regularity diagnostic looks.  ``along`` turns the point
    diagnostic into a strip diagnostic around a boundary segment."""
    center: Point2
    r0: float
    along: Optional[tuple[Point2, Point2]] = None


@dataclass(frozen=True)
class ExampleSpec:
    id: int
    title: str
    domain: Domain
    u: VectorField2
    l: ScalarField
    W: float
    z: Callable
    intervals: tuple[tuple[tuple[Label, float, float], ...], ...]
    exceptional: tuple[Point2, ...]
    boundary_verdict: Verdict
    expected_reason: str
    h1: str                       # CONVERGENT, DIVERGENT or JUMP
    h1_locus: Optional[H1Locus]
    singular: tuple[Point2, ...]  # points the solver checks keep away from
    texts: dict = field(default_factory=dict)

    def closed_form(self, x, y):
        return self.z(x, y)


# ---------------------------------------------------------------- examples

def _square() -> Domain:
    return polygon([(0.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0)])


_SQUARE_LABELS = (((Label.PLUS, 0.0, 1.0),), ((Label.PLUS, 0.0, 1.0),),
                  ((Label.MINUS, 0.0, 1.0),), ((Label.ZERO, 0.0, 1.0),))


def _example1() -> ExampleSpec:
    def z(x, y):
        return 0.6 * np.cbrt(x) ** 2 * (1.0 - y ** (5.0 / 3.0) / 2.0 ** (5.0 / 3.0))
    texts = dict(u1="x", u2="-y", l="x^(2/3)")
    return ExampleSpec(1, "square, l = x^(2/3)", _square(), VectorField2.parse("x", "-y"),
                       ScalarField.parse(texts["l"]), 1.0, _scalarize(z), _SQUARE_LABELS, (),
                       Verdict.THEOREM_2_2, "", "CONVERGENT",
                       H1Locus((0.0, 1.5), 0.25), ((0.0, 1.0), (0.0, 2.0)), texts)


def _example2() -> ExampleSpec:
    def z(x, y):
        return np.sqrt(x) / 6.0 * (4.0 - y * np.sqrt(2.0 * y))
    texts = dict(u1="x", u2="-y", l="sqrt(x)")
    return ExampleSpec(2, "square, l = sqrt(x)", _square(), VectorField2.parse("x", "-y"),
                       ScalarField.parse(texts["l"]), 1.0, _scalarize(z), _SQUARE_LABELS, (),
                       Verdict.THEOREM_2_2, "", "DIVERGENT",
                       H1Locus((0.0, 1.5), 0.25, ((0.0, 2.0), (0.0, 1.0))),
                       ((0.0, 1.0), (0.0, 2.0)), texts)


def _example3() -> ExampleSpec:
    def z(x, y):
        return 1.0 - 2.0 * y / (1.0 + np.sqrt(1.0 + 4.0 * x * y))
    texts = dict(u1="x", u2="-y", l="1")
    A = (-0.5, 0.5)
    return ExampleSpec(3, "triangle A(-1/2,1/2) B(1/2,1/2) C(1/2,3/2)",
                       polygon([A, (0.5, 0.5), (0.5, 1.5)]), VectorField2.parse("x", "-y"),
                       ScalarField.constant(1.0), 1.0, _scalarize(z),
                       (((Label.PLUS, 0.0, 1.0),), ((Label.PLUS, 0.0, 1.0),),
                        ((Label.MINUS, 0.0, 1.0),)),
                       (A,), Verdict.THEOREM_3_1, "", "CONVERGENT", H1Locus(A, 0.25), (A,), texts)


def example4_alpha(x, y):
    return np.cbrt((x * y * y + y - 1.0 / 9.0) / 3.0) + 1.0 / 3.0


def _example4() -> ExampleSpec:
    def z(x, y):
        return 1.0 - np.exp(1.0 / example4_alpha(x, y) - 1.0 / y)
    texts = dict(u1="2*x*y + 1", u2="-y^2", l="1")
    A = (-2.0, 1.0 / 3.0)
    return ExampleSpec(4, "triangle A(-2,1/3) B(0,1/3) C(0,1)",
                       polygon([A, (0.0, 1.0 / 3.0), (0.0, 1.0)]),
                       VectorField2.parse(texts["u1"], texts["u2"]), ScalarField.constant(1.0),
                       1.0, _scalarize(z),
                       (((Label.PLUS, 0.0, 1.0),), ((Label.PLUS, 0.0, 1.0),),
                        ((Label.MINUS, 0.0, 1.0),)),
                       (A,), Verdict.INCONCLUSIVE, "double root", "DIVERGENT",
                       H1Locus(A, 0.1), (A,), texts)


# Example 5: X = -x y^2 - y is constant along characteristics.
def example5_alpha1(y):
    """X restricted to the side AB (x = y - 2)."""
    return -y ** 3 + 2.0 * y ** 2 - y


def example5_beta(y):
    """X restricted to the side BC (x = 3y/2 - 25/12)."""
    return -1.5 * y ** 3 + (25.0 / 12.0) * y ** 2 - y


EX5_SPLIT = -4.0 / 27.0
EX5_JUMP_RANGE = (1.0 / 3.0, (3.0 + math.sqrt(3.0)) / 8.0)


def example5_y1() -> float:
    """Height where the level set X = -4/27 meets the side BC."""
    return bisect(lambda y: example5_beta(y) - EX5_SPLIT, 1.0 / 6.0, 0.5, tol=1e-15)


def example5_region(x, y) -> np.ndarray:
    """1, 2 or 3 following the defining inequalities of the three subdomains."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    X = -x * y * y - y
    return np.where(X < EX5_SPLIT, 3, np.where(y > 1.0 / 3.0, 1, 2))


def example5_alpha1_inverse(offset):
    """Y in [1/3, 2/3] with alpha1(Y) = -4/27 + offset.

    alpha1(Y) + 4/27 = (Y - 1/3)^2 (4/3 - Y) has a double root at 1/3, so the
    inversion is done on (Y - 1/3) sqrt(4/3 - Y) = sqrt(offset), which stays
    well conditioned at offset = 0."""
    offset = np.asarray(offset, dtype=float)
    if np.any(offset < -1e-15) or np.any(offset > 2.0 / 27.0 + 1e-15):
        raise OracleError("level outside the range of the side AB")
    root = np.sqrt(np.clip(offset, 0.0, 2.0 / 27.0))
    return invert_monotone(lambda Y: (Y - 1.0 / 3.0) * np.sqrt(4.0 / 3.0 - Y), root,
                           1.0 / 3.0, 2.0 / 3.0)


def _ex5_value(region: int, offset, y):
    # offset = X + 4/27 on the level set through the point
    if region == 1:
        Y = example5_alpha1_inverse(offset)
    else:
        Y = invert_monotone(example5_beta, EX5_SPLIT + offset, 1.0 / 6.0, 0.5)
    return 1.0 - np.exp(1.0 / y - 1.0 / Y)


def example5_piece(region: int, x, y):
    """Closed form of the solution in one subdomain, evaluated anywhere its
    inversion makes sense."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return _ex5_value(region, -x * y * y - y - EX5_SPLIT, y)


def example5_side_limits(y, offset: float = 0.0):
    """Values of the Omega_1 and Omega_3 pieces on the levels X = -4/27 + offset
    and X = -4/27 - offset at height y; offset = 0 gives the one-sided limits
    on the curve X = -4/27."""
    y = np.asarray(y, dtype=float)
    off = np.full(y.shape, float(offset))
    return _ex5_value(1, off, y), _ex5_value(3, -off, y)


def example5_jump(y) -> float:
    """Jump of the solution across the curve X = -4/27 above y = 1/3."""
    lo, hi = EX5_JUMP_RANGE
    ya = np.asarray(y, dtype=float)
    if np.any(ya <= lo) or np.any(ya >= hi):
        raise OracleError(f"y must lie in ({lo:.6g}, {hi:.6g})")
    out = (math.exp(-1.0 / example5_y1()) - math.exp(-3.0)) * np.exp(1.0 / ya)
    return float(out) if ya.ndim == 0 else out


def _example5() -> ExampleSpec:
    def z(x, y):
        reg = example5_region(x, y)
        out = np.empty(x.shape)
        for k in (1, 2, 3):
            m = reg == k
            if np.any(m):
                out[m] = example5_piece(k, x[m], y[m])
        return out
    texts = dict(u1="-2*x*y - 1", u2="y^2", l="1")
    D = (-5.0 / 3.0, 1.0 / 3.0)
    return ExampleSpec(5, "triangle A(-4/3,2/3) B(-11/6,1/6) C(-4/3,1/2)",
                       polygon([(-4.0 / 3.0, 2.0 / 3.0), (-11.0 / 6.0, 1.0 / 6.0),
                                (-4.0 / 3.0, 0.5)]),
                       VectorField2.parse(texts["u1"], texts["u2"]), ScalarField.constant(1.0),
                       1.0, _scalarize(z),
                       (((Label.MINUS, 0.0, 2.0 / 3.0), (Label.PLUS, 2.0 / 3.0, 1.0)),
                        ((Label.MINUS, 0.0, 1.0),), ((Label.PLUS, 0.0, 1.0),)),
                       (D,), Verdict.INCONCLUSIVE, "u.tau_- > 0", "JUMP", None, (D,), texts)


# Example 6: disc of center (0, 1) and radius 1/2; X = x y is invariant.
EX6_T0 = math.asin((math.sqrt(3.0) - 1.0) / 2.0)
EX6_Y_TOP = (3.0 + math.sqrt(3.0)) / 4.0


def example6_g(y):
    return 0.5 * y * np.sqrt(np.maximum((2.0 * y - 1.0) * (3.0 - 2.0 * y), 0.0))


def example6_alpha(X):
    """Height of the inflow point on the level set x y = X."""
    return invert_monotone(example6_g, np.abs(X), EX6_Y_TOP, 1.5)


def _example6() -> ExampleSpec:
    def z(x, y):
        return 1.0 - y / example6_alpha(x * y)
    texts = dict(u1="x", u2="-y", l="1")
    arc = Arc((0.0, 1.0), 0.5, -math.pi, math.pi)
    s0 = (EX6_T0 + math.pi) / (2 * math.pi)
    s1 = (math.pi - EX6_T0 + math.pi) / (2 * math.pi)
    m0, m1 = arc.point(s0), arc.point(s1)
    return ExampleSpec(6, "disc of center (0,1) and radius 1/2", Domain([arc]),
                       VectorField2.parse("x", "-y"), ScalarField.constant(1.0), 1.0,
                       _scalarize(z),
                       (((Label.PLUS, 0.0, s0), (Label.MINUS, s0, s1), (Label.PLUS, s1, 1.0)),),
                       (m0, m1), Verdict.INCONCLUSIVE, "curved edges", "CONVERGENT",
                       H1Locus(m0, 0.1), (m0, m1), texts)


# Example 7: stadium-like domain, two half discs joined by vertical sides.
def example7_theta0() -> float:
    return bisect(lambda t: -2 * t ** 3 - 3 * t ** 2 - 2 * t + 1, 0.0, 1.0)


def example7_t0() -> float:
    return 2.0 * math.atan(example7_theta0())


def _ex7_root(y):
    return np.sqrt(np.maximum((2.0 * y - 1.0) * (3.0 - 2.0 * y), 0.0))


def example7_g(y):
    """x y on the left quarter of the upper arc."""
    return 0.5 * y * (1.0 - _ex7_root(y))


def example7_gtilde(y):
    """x y on the part of the upper arc right of its top."""
    return 0.5 * y * (1.0 + _ex7_root(y))


def example7_alpha(X):
    X = np.asarray(X, dtype=float)
    t0 = example7_t0()
    y_t0 = 1.0 + 0.5 * math.sin(t0)
    top = float(example7_gtilde(y_t0))
    if np.any(X < -1e-15) or np.any(X > top + 1e-13):
        raise OracleError(f"X outside [0, {top:.12g}]")
    out = np.empty(X.shape)
    low = X <= 0.75
    if np.any(low):
        out[low] = invert_monotone(example7_g, X[low], 1.0, 1.5)
    if np.any(~low):
        out[~low] = invert_monotone(example7_gtilde, X[~low], y_t0, 1.5)
    return out


def _example7() -> ExampleSpec:
    def z(x, y):
        return 1.0 - y / example7_alpha(x * y)
    texts = dict(u1="x", u2="-y", l="1")
    t0 = example7_t0()
    upper = Arc((0.5, 1.0), 0.5, 0.0, math.pi)
    d = Domain([Segment((1.0, 0.75), (1.0, 1.0)), upper,
                Segment((0.0, 1.0), (0.0, 0.75)), Arc((0.5, 0.75), 0.5, math.pi, 2 * math.pi)])
    s0 = t0 / math.pi
    m0 = upper.point(s0)
    return ExampleSpec(7, "two half discs joined along x = 0 and x = 1", d,
                       VectorField2.parse("x", "-y"), ScalarField.constant(1.0), 1.0,
                       _scalarize(z),
                       (((Label.PLUS, 0.0, 1.0),),
                        ((Label.PLUS, 0.0, s0), (Label.MINUS, s0, 1.0)),
                        ((Label.ZERO, 0.0, 1.0),), ((Label.PLUS, 0.0, 1.0),)),
                       (m0, (0.0, 1.0)), Verdict.INCONCLUSIVE, "curved edges", "DIVERGENT",
                       H1Locus((0.0, 0.875), 0.1, ((0.0, 1.0), (0.0, 0.75))),
                       (m0, (0.0, 1.0), (0.0, 0.75)), texts)


_BUILDERS = {1: _example1, 2: _example2, 3: _example3, 4: _example4,
             5: _example5, 6: _example6, 7: _example7}
_CACHE: dict[int, ExampleSpec] = {}


def example(n: int) -> ExampleSpec:
    if n not in _BUILDERS:
        raise OracleError(f"no example {n}; choose 1..7")
    if n not in _CACHE:
        _CACHE[n] = _BUILDERS[n]()
    return _CACHE[n]


def all_examples() -> list[ExampleSpec]:
    return [example(n) for n in sorted(_BUILDERS)]
