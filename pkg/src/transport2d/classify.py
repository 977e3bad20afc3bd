"""Sign decomposition of W u.n along the boundary and hypothesis checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import VectorField2
from .geometry import Arc, Domain, Edge, Point2

SAMPLES_PER_EDGE = 2048
ROOT_TOL = 1e-12
ZERO_TOL = 1e-10
MULTIPLE_ROOT_TOL = 1e-8
TANGENT_TOL = 1e-10
MAX_SIGN_CHANGES = 64
LABEL_CHECK_SAMPLES = 100

SUFFICIENCY_NOTE = (
    "hypotheses are sufficient, not necessary: a failed check means the theorem "
    "does not apply, never that the problem is ill-posed")


class PathologicalField(ValueError):
    pass


class Label(str, enum.Enum):
    MINUS = "MINUS"
    PLUS = "PLUS"
    ZERO = "ZERO"


@dataclass(frozen=True)
class Interval:
    s0: float
    s1: float
    label: Label


@dataclass(frozen=True)
class Root:
    s: float
    point: Point2
    derivative: float  # d(W u.n)/d(arclength) at the root
    multiplicity: int  # 1 = simple, 2 = at least double
    sign_change: bool


@dataclass(frozen=True)
class EdgeClassification:
    index: int
    intervals: tuple[Interval, ...]
    roots: tuple[Root, ...]
    verified: bool

    def label_at(self, s: float) -> Optional[Label]:
        for iv in self.intervals:
            if iv.s0 < s < iv.s1:
                return iv.label
        return None


@dataclass(frozen=True)
class BoundaryClassification:
    W: float
    edges: tuple[EdgeClassification, ...]

    def intervals(self, label: Label) -> list[tuple[int, float, float]]:
        return [(ec.index, iv.s0, iv.s1) for ec in self.edges for iv in ec.intervals
                if iv.label == label]

    def edge_labels(self) -> list[set[Label]]:
        return [{iv.label for iv in ec.intervals} for ec in self.edges]


# ---------------------------------------------------------------- helpers

def normal_velocity(d: Domain, u: VectorField2, W: float, k: int, s) -> np.ndarray:
    """W u.n on edge ``k`` at parameters ``s`` (vectorized)."""
    e = d.edges[k]
    s = np.atleast_1d(np.asarray(s, dtype=float))
    pts = e.points(s)
    n = e.normals(s)
    u1, u2 = u.array(pts[:, 0], pts[:, 1])
    return W * (u1 * n[:, 0] + u2 * n[:, 1])


def _un_scalar(e: Edge, u: VectorField2, W: float, s: float) -> float:
    p = e.point(s)
    n = e.normal(s)
    a, b = u(p[0], p[1])
    return W * (a * n[0] + b * n[1])


def boundary_derivative(e: Edge, u: VectorField2, s: float, direction: Point2 | None = None,
                        normal: Point2 | None = None) -> float:
    """Derivative of u.n along the boundary per unit arclength in ``direction``
    (default: the edge's travel direction), with n the edge normal."""
    p = e.point(s)
    tau = e.tangent(s)
    sign = 1.0
    if direction is not None:
        sign = 1.0 if tau[0] * direction[0] + tau[1] * direction[1] >= 0 else -1.0
    n = normal if normal is not None else e.normal(s)
    (a1, a2), (b1, b2) = u.jacobian(p[0], p[1])
    du1 = a1 * tau[0] + a2 * tau[1]
    du2 = b1 * tau[0] + b2 * tau[1]
    dn = e.normal_rate(s)
    uv = u(p[0], p[1])
    val = du1 * n[0] + du2 * n[1] + uv[0] * dn[0] + uv[1] * dn[1]
    return sign * val


def _bisect(f, a: float, b: float, fa: float, tol: float = ROOT_TOL) -> float:
    for _ in range(200):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def _golden_min(f, a: float, b: float, iters: int = 100) -> tuple[float, float]:
    g = (math.sqrt(5) - 1) / 2
    c1, c2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(c1), f(c2)
    for _ in range(iters):
        if b - a < 1e-15:
            break
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - g * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + g * (b - a)
            f2 = f(c2)
    return (c1, f1) if f1 <= f2 else (c2, f2)


# --------------------------------------------------------- classification

def _classify_edge(d: Domain, u: VectorField2, W: float, k: int) -> EdgeClassification:
    e = d.edges[k]
    f = lambda s: _un_scalar(e, u, W, s)  # noqa: E731
    s = np.linspace(0.0, 1.0, SAMPLES_PER_EDGE + 1)
    vals = normal_velocity(d, u, W, k, s)
    zero = np.abs(vals) <= ZERO_TOL
    sgn = np.where(zero, 0, np.sign(vals)).astype(int)

    roots: list[float] = []
    zero_runs: list[tuple[float, float]] = []

    # runs of zero samples
    i = 0
    n = len(s)
    while i < n:
        if zero[i]:
            j = i
            while j + 1 < n and zero[j + 1]:
                j += 1
            if j > i:
                lo = s[i] if i == 0 else _zero_boundary(f, s[i - 1], s[i])
                hi = s[j] if j == n - 1 else _zero_boundary(f, s[j + 1], s[j])
                zero_runs.append((lo, hi))
            else:
                roots.append(_refine_isolated_zero(f, s, vals, i))
            i = j + 1
        else:
            i += 1

    # sign changes between consecutive nonzero samples
    nz = np.flatnonzero(~zero)
    changes = 0
    for a, b in zip(nz[:-1], nz[1:]):
        if b == a + 1 and sgn[a] != sgn[b]:
            changes += 1
            roots.append(_bisect(f, s[a], s[b], vals[a]))
        elif b > a + 1 and sgn[a] != sgn[b]:
            changes += 1
    if changes > MAX_SIGN_CHANGES:
        raise PathologicalField(
            f"W u.n changes sign {changes} times on edge {k} (limit {MAX_SIGN_CHANGES})")

    # touching roots hidden between samples: local minima of |W u.n|
    absv = np.abs(vals)
    scale = float(absv.max()) if absv.size else 0.0
    for i in range(1, n - 1):
        if zero[i - 1] or zero[i] or zero[i + 1]:
            continue
        if sgn[i - 1] == sgn[i] == sgn[i + 1] and absv[i] <= absv[i - 1] and absv[i] <= absv[i + 1] \
                and absv[i] < 1e-3 * scale:
            sg = sgn[i]
            sm, fm = _golden_min(lambda t: sg * f(t), s[i - 1], s[i + 1])
            if fm <= ZERO_TOL:
                roots.append(sm)

    # ZERO intervals must vanish on LABEL_CHECK_SAMPLES samples and end at roots
    zero_intervals = []
    for lo, hi in zero_runs:
        ts = np.linspace(lo, hi, LABEL_CHECK_SAMPLES + 2)[1:-1]
        if np.all(np.abs(normal_velocity(d, u, W, k, ts)) <= ZERO_TOL) \
                and abs(f(lo)) <= ZERO_TOL and abs(f(hi)) <= ZERO_TOL:
            zero_intervals.append((lo, hi))
        else:
            roots.extend([lo, hi])

    roots = sorted(set(roots))
    # drop roots inside zero intervals; their endpoints are the breakpoints
    roots = [r for r in roots if not any(lo - 1e-12 <= r <= hi + 1e-12 for lo, hi in zero_intervals)]
    root_objs = []
    for r in _dedupe(roots):
        der = W * boundary_derivative(e, u, r)
        left = f(max(0.0, r - 1e-6)) if r > 0 else None
        right = f(min(1.0, r + 1e-6)) if r < 1 else None
        change = left is not None and right is not None and (left < 0) != (right < 0)
        r = float(r)
        mult = 2 if abs(der) < MULTIPLE_ROOT_TOL else 1
        root_objs.append(Root(r, e.point(r), float(der), mult, change))

    breaks = sorted({0.0, 1.0, *[r.s for r in root_objs],
                     *[v for z in zero_intervals for v in z]})
    intervals: list[Interval] = []
    verified = True
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 0:
            continue
        if any(abs(a - lo) <= 1e-12 and abs(b - hi) <= 1e-12 for lo, hi in zero_intervals):
            intervals.append(Interval(float(a), float(b), Label.ZERO))
            continue
        ts = np.linspace(a, b, LABEL_CHECK_SAMPLES + 2)[1:-1]
        tv = normal_velocity(d, u, W, k, ts)
        pos, neg = np.sum(tv > ZERO_TOL), np.sum(tv < -ZERO_TOL)
        label = Label.PLUS if pos >= neg else Label.MINUS
        if (label == Label.PLUS and neg) or (label == Label.MINUS and pos):
            verified = False
        intervals.append(Interval(float(a), float(b), label))
    return EdgeClassification(k, tuple(intervals), tuple(root_objs), verified)


def _dedupe(xs: list[float], tol: float = 1e-10) -> list[float]:
    out: list[float] = []
    for x in xs:
        if not out or x - out[-1] > tol:
            out.append(x)
    return out


def _zero_boundary(f, nonzero_at: float, zero_at: float) -> float:
    """Bisect between a sample where |f| > tol and one where |f| <= tol;
    returns the end of the zero run."""
    a, b = nonzero_at, zero_at
    for _ in range(60):
        m = 0.5 * (a + b)
        if abs(f(m)) <= ZERO_TOL:
            b = m
        else:
            a = m
    return b


def _refine_isolated_zero(f, s, vals, i: int) -> float:
    n = len(s)
    if 0 < i < n - 1 and np.sign(vals[i - 1]) != np.sign(vals[i + 1]):
        return _bisect(f, s[i - 1], s[i + 1], vals[i - 1])
    if i == 0 or i == n - 1:
        return float(s[i])
    sm, _ = _golden_min(lambda t: abs(f(t)), s[i - 1], s[i + 1])
    return sm


def classify_boundary(d: Domain, u: VectorField2, W: float) -> BoundaryClassification:
    if W == 0 or not math.isfinite(W):
        raise ValueError("W must be a nonzero finite number")
    return BoundaryClassification(float(W), tuple(_classify_edge(d, u, W, k) for k in range(len(d.edges))))


# ------------------------------------------------------ inflow components

@dataclass(frozen=True)
class Piece:
    edge: int
    s0: float
    s1: float


@dataclass(frozen=True)
class Component:
    pieces: tuple[Piece, ...]
    closed: bool
    interior_roots: tuple[tuple[int, float], ...]


def gamma_minus_components(c: BoundaryClassification, d: Domain) -> list[Component]:
    """Connected components of the closure of Gamma-minus, in traversal order.

    Consecutive MINUS intervals separated only by isolated roots (inside an
    edge or at a vertex) belong to the same component.
    """
    items: list[tuple[int, Interval]] = [(ec.index, iv) for ec in c.edges for iv in ec.intervals]
    if not items:
        return []
    start = next((i for i, (_, iv) in enumerate(items) if iv.label != Label.MINUS), None)
    if start is None:
        pieces = tuple(Piece(k, iv.s0, iv.s1) for k, iv in items)
        roots = tuple((ec.index, r.s) for ec in c.edges for r in ec.roots)
        return [Component(pieces, True, roots)]
    order = items[start:] + items[:start]
    comps: list[Component] = []
    current: list[Piece] = []
    for k, iv in order:
        if iv.label == Label.MINUS:
            current.append(Piece(k, iv.s0, iv.s1))
        elif current:
            comps.append(_component(current, c))
            current = []
    if current:
        comps.append(_component(current, c))
    return comps


def _component(pieces: list[Piece], c: BoundaryClassification) -> Component:
    interior = []
    for a, b in zip(pieces[:-1], pieces[1:]):
        # junction between consecutive pieces: a root inside an edge or a vertex
        for ec in (c.edges[a.edge], c.edges[b.edge]):
            for r in ec.roots:
                if (ec.index == a.edge and abs(r.s - a.s1) <= 1e-12) or \
                        (ec.index == b.edge and abs(r.s - b.s0) <= 1e-12):
                    interior.append((ec.index, r.s))
    return Component(tuple(pieces), False, tuple(sorted(set(interior))))


# ------------------------------------------------------- exceptional set

@dataclass(frozen=True)
class ExceptionalPoint:
    m: Point2
    on_edge: int
    s: float
    is_vertex: bool
    normal: Point2          # n_- : outward normal of the inflow edge at m
    tau: Point2             # tau_- : unit tangent at m pointing into Gamma-minus
    u_dot_n: float
    du_dtau_dot_n: float    # (du/dtau_-) . n_-
    boundary_derivative: float  # d(u.n_-)/dtau_- along the boundary
    u_dot_tau: float


@dataclass(frozen=True)
class Endpoint:
    m: Point2
    edge: int
    s: float
    is_vertex: bool
    normal: Point2
    tau: Point2


@dataclass(frozen=True)
class ExceptionalSet:
    points: tuple[ExceptionalPoint, ...]
    endpoints: tuple[Endpoint, ...]
    interior_roots: tuple[tuple[int, float, Point2], ...]

    @property
    def hs_holds(self) -> bool:
        """No root of u.n in the interior of the closure of Gamma-minus."""
        return not self.interior_roots


def gamma_minus_endpoints(c: BoundaryClassification, d: Domain) -> list[Endpoint]:
    out = []
    for comp in gamma_minus_components(c, d):
        if comp.closed:
            continue
        first, last = comp.pieces[0], comp.pieces[-1]
        for piece, s, into in ((first, first.s0, 1.0), (last, last.s1, -1.0)):
            e = d.edges[piece.edge]
            t = e.tangent(s)
            out.append(Endpoint(e.point(s), piece.edge, s,
                                s <= 1e-12 or s >= 1 - 1e-12,
                                e.normal(s), (into * t[0], into * t[1])))
    return out


def exceptional_points(c: BoundaryClassification, d: Domain, u: VectorField2) -> ExceptionalSet:
    pts = []
    endpoints = gamma_minus_endpoints(c, d)
    for ep in endpoints:
        e = d.edges[ep.edge]
        uv = u(*ep.m)
        un = uv[0] * ep.normal[0] + uv[1] * ep.normal[1]
        if abs(un) > ZERO_TOL:
            continue
        (a1, a2), (b1, b2) = u.jacobian(*ep.m)
        du = (a1 * ep.tau[0] + a2 * ep.tau[1], b1 * ep.tau[0] + b2 * ep.tau[1])
        pts.append(ExceptionalPoint(
            m=ep.m, on_edge=ep.edge, s=ep.s, is_vertex=ep.is_vertex,
            normal=ep.normal, tau=ep.tau, u_dot_n=un,
            du_dtau_dot_n=du[0] * ep.normal[0] + du[1] * ep.normal[1],
            boundary_derivative=boundary_derivative(e, u, ep.s, direction=ep.tau),
            u_dot_tau=uv[0] * ep.tau[0] + uv[1] * ep.tau[1]))
    interior = []
    for comp in gamma_minus_components(c, d):
        for k, s in comp.interior_roots:
            interior.append((k, s, d.edges[k].point(s)))
        for piece in comp.pieces:
            for r in c.edges[piece.edge].roots:
                if piece.s0 + 1e-12 < r.s < piece.s1 - 1e-12:
                    interior.append((piece.edge, r.s, r.point))
    return ExceptionalSet(tuple(pts), tuple(endpoints), tuple(sorted(set(interior))))


# ----------------------------------------------------------- gradient bound

def grad_sup_norm(u: VectorField2, d: Domain, n: int = 256) -> float:
    """Max over inside lattice points and boundary samples of the largest
    Jacobian entry in absolute value."""
    x0, y0, x1, y1 = d.bbox
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    mask = _inside_mask(d, pts)
    samples = [pts[mask]]
    for e in d.edges:
        samples.append(e.points(np.linspace(0.0, 1.0, n)))
    P = np.vstack(samples)
    best = 0.0
    for comp in (u.u1.array_dx, u.u1.array_dy, u.u2.array_dx, u.u2.array_dy):
        vals = _safe_eval(comp, P)
        if vals.size:
            best = max(best, float(np.max(np.abs(vals))))
    return best


def _safe_eval(fn, P: np.ndarray) -> np.ndarray:
    try:
        return fn(P[:, 0], P[:, 1])
    except ArithmeticError:
        out = []
        for p in P:
            try:
                out.append(float(fn(np.array([p[0]]), np.array([p[1]]))[0]))
            except ArithmeticError:
                continue
        return np.asarray(out)


def _inside_mask(d: Domain, pts: np.ndarray) -> np.ndarray:
    return d.contains_many(pts)


# ---------------------------------------------------------- hypotheses

class Verdict(str, enum.Enum):
    THEOREM_2_2 = "THEOREM_2_2"
    THEOREM_3_1 = "THEOREM_3_1"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class PointCheck:
    m: Point2
    simple_root: bool
    tangent_negative: bool
    boundary_derivative: float
    du_dtau_dot_n: float
    w_u_dot_tau: float


@dataclass(frozen=True)
class GradBound:
    holds: bool
    sup_norm: float
    threshold: float


@dataclass(frozen=True)
class AssumptionReport:
    grad_bound: GradBound
    interior_nonvanishing: bool
    nonvanishing_on_closure: bool
    points: tuple[PointCheck, ...]
    boundary_verdict: Verdict
    verdict: Verdict
    reasons: tuple[str, ...]
    warnings: tuple[str, ...] = field(default=())
    note: str = SUFFICIENCY_NOTE


def check_hypotheses(d: Domain, u: VectorField2, W: float, c: BoundaryClassification,
                     E: ExceptionalSet, sup_norm: float | None = None) -> AssumptionReport:
    """Evaluate the gradient bound and the pointwise conditions on Gamma-minus.

    ``boundary_verdict`` uses only the conditions located on the boundary
    (no root inside the closure of Gamma-minus; simple root and negative
    tangential velocity at every exceptional point).  ``verdict`` also requires
    the global gradient bound.
    """
    if sup_norm is None:
        sup_norm = grad_sup_norm(u, d)
    threshold = 1.0 / (2.0 * abs(W))
    gb = GradBound(sup_norm <= threshold, sup_norm, threshold)
    sw = 1.0 if W > 0 else -1.0
    reasons: list[str] = []
    warnings: list[str] = []
    checks = []
    for p in E.points:
        simple = abs(p.boundary_derivative) > MULTIPLE_ROOT_TOL
        wut = sw * p.u_dot_tau
        tneg = wut < -TANGENT_TOL
        checks.append(PointCheck(p.m, simple, tneg, p.boundary_derivative, p.du_dtau_dot_n, wut))
        label = _fmt_point(p.m)
        if not simple:
            reasons.append(f"double root of u.n at {label} "
                           f"(|d(u.n)/dtau| = {abs(p.boundary_derivative):.3e} <= {MULTIPLE_ROOT_TOL:g})")
        if not tneg:
            reasons.append(f"u.tau_- > 0 at {label} (W u.tau_- = {wut:.6g})")
    if not E.hs_holds:
        for k, s, pt in E.interior_roots:
            reasons.append(f"u.n vanishes inside the closure of Gamma- at {_fmt_point(pt)} (edge {k})")
    nonvanishing = not E.points and E.hs_holds
    if nonvanishing:
        boundary_verdict = Verdict.THEOREM_2_2
    elif E.hs_holds and all(ch.simple_root and ch.tangent_negative for ch in checks):
        boundary_verdict = Verdict.THEOREM_3_1
    else:
        boundary_verdict = Verdict.INCONCLUSIVE
    curved = any(isinstance(e, Arc) for e in d.edges)
    if curved and boundary_verdict != Verdict.INCONCLUSIVE:
        reasons.append("domain has curved edges: the theorems are stated for polygons, "
                       "only the analogous boundary conditions were checked")
        boundary_verdict = Verdict.INCONCLUSIVE
    if not gb.holds:
        reasons.append(f"gradient bound fails: sup|grad u| = {sup_norm:.6g} > 1/(2|W|) = {threshold:.6g}")
    verdict = boundary_verdict if gb.holds else Verdict.INCONCLUSIVE
    if not d.is_convex():
        warnings.append("domain is not convex; the theorems are stated for convex polygons")
    if not all(ec.verified for ec in c.edges):
        warnings.append("some interval labels could not be verified on all samples")
    return AssumptionReport(gb, E.hs_holds, nonvanishing, tuple(checks), boundary_verdict,
                            verdict, tuple(reasons), tuple(warnings))


def _fmt_point(p) -> str:
    return f"({p[0]:.6g}, {p[1]:.6g})"
