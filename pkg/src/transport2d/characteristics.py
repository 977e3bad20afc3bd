"""Backward characteristic tracing for z + W u.grad z = l with z = 0 on the
inflow boundary.

Along X' = -W u(X) (t >= 0 measures time before the query point) the
solution is z(x0) = int_0^T e^{-t} l(X(t)) dt, T being the time the path
needs to reach the inflow boundary.  The integral is carried as a third
state component so it inherits the integrator's error control.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classify import BoundaryClassification, Label, classify_boundary, gamma_minus_endpoints
from .expr import ScalarField, VectorField2
from .geometry import Domain, Point2

T_MAX = 40.0
DEFAULT_TOL = 1e-9
CROSSING_TOL = 1e-12
CORNER_TOL = 1e-9
INFLOW_TOL = 1e-10
BOUNDARY_TOL = 1e-10   # relative distance accepted as a boundary start
ENTRY_STEP = 1e-6     # relative length of the entry step from the boundary
MAX_STEPS = 200_000
CSV_COLUMNS = ("x", "y", "z", "status", "exit_x", "exit_y", "T")

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


class OutsideDomain(ValueError):
    pass


class TransportProblem:
    """Domain, velocity, right-hand side and W, with the inflow classification."""

    def __init__(self, domain: Domain, u: VectorField2, l: ScalarField, W: float = 1.0,
                 classification: Optional[BoundaryClassification] = None):
        if W == 0 or not math.isfinite(W):
            raise ValueError("W must be a nonzero finite number")
        self.domain = domain
        self.u = u
        self.l = l
        self.W = float(W)
        self.classification = classification or classify_boundary(domain, u, W)
        self.inflow_ends = tuple(ep.m for ep in gamma_minus_endpoints(self.classification, domain))
        self.corners = tuple(v.point for v in domain.vertices
                             if abs(v.inner_angle - math.pi) > 1e-12)

    def with_rhs(self, l: ScalarField) -> "TransportProblem":
        return TransportProblem(self.domain, self.u, l, self.W, self.classification)

    def __getstate__(self):
        return (self.domain, self.u, self.l, self.W, self.classification)

    def __setstate__(self, state):
        self.__init__(*state)


@dataclass(frozen=True)
class TraceResult:
    value: float
    status: str   # HitGammaMinus, OnGammaMinus, HitCorner, LeftThroughOther, Truncated
    exit_point: Optional[Point2]
    T: float
    edge: Optional[int] = None
    residual_bound: float = 0.0
    degraded: bool = False
    path: Optional[tuple[Point2, ...]] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in ("HitGammaMinus", "OnGammaMinus")


class _Rhs:
    __slots__ = ("u1", "u2", "l", "W")

    def __init__(self, p: TransportProblem):
        self.u1, self.u2, self.l, self.W = p.u.u1, p.u.u2, p.l, p.W

    def __call__(self, t: float, x: float, y: float, _j: float = 0.0):
        w = self.W
        return (-w * self.u1(x, y), -w * self.u2(x, y), math.exp(-t) * self.l(x, y))


def _dp_step(f: _Rhs, t: float, s: tuple, h: float, k0: tuple):
    """One Dormand-Prince step; returns (new state, error estimate, last stage)."""
    ks = [k0]
    for i in range(1, 7):
        a = _A[i]
        xs = [s[c] + h * sum(a[j] * ks[j][c] for j in range(i)) for c in range(3)]
        ks.append(f(t + _C[i] * h, *xs))
    new = tuple(s[c] + h * sum(_B[j] * ks[j][c] for j in range(7)) for c in range(3))
    err = tuple(h * sum(_E[j] * ks[j][c] for j in range(7)) for c in range(3))
    return new, err, ks[6]


def trace_backward(p: TransportProblem, x0: Point2, tol: float = DEFAULT_TOL,
                   t_max: float = T_MAX, record_path: bool = False) -> TraceResult:
    """Follow the characteristic through ``x0`` backwards to the boundary."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = p.domain
    x0 = (float(x0[0]), float(x0[1]))
    f = _Rhs(p)
    t = 0.0
    s = (x0[0], x0[1], 0.0)
    k0 = f(t, *s)
    if not d.contains(x0):
        start = _boundary_start(p, f, x0, k0)
        if isinstance(start, TraceResult):
            return start
        t, s = start
        k0 = f(t, *s)
    speed = math.hypot(k0[0], k0[1])
    h = min(0.05 * d.diameter / speed if speed > 0 else 0.1, 0.1)
    lmax = abs(k0[2])
    path = [x0] if record_path else None
    for _ in range(MAX_STEPS):
        if t >= t_max:
            return _truncated(p, t, s, lmax, path)
        h = min(h, t_max - t)
        if h < 1e-14 * max(1.0, t):
            return _truncated(p, t, s, lmax, path)
        try:
            new, err, k_last = _dp_step(f, t, s, h, k0)
        except (ArithmeticError, ValueError):
            h *= 0.5
            continue
        enorm = _error_norm(new, err, tol)
        if not math.isfinite(enorm) or enorm > 1.0:
            h *= max(0.2, 0.9 * enorm ** -0.2) if math.isfinite(enorm) else 0.25
            continue
        inside_new = d.contains((new[0], new[1]))
        if not inside_new:
            res = _cross(p, f, t, s, h, k0, path, tol)
            if isinstance(res, TraceResult):
                return res
            h = res
            continue
        t += h
        s, k0 = new, k_last
        lmax = max(lmax, abs(k0[2]) * math.exp(t))
        if path is not None:
            path.append((s[0], s[1]))
        h *= min(5.0, 0.9 * enorm ** -0.2) if enorm > 0 else 5.0
    return _truncated(p, t, s, lmax, path)


def _boundary_start(p: TransportProblem, f: _Rhs, x0: Point2, k0: tuple):
    """Start on the closed boundary: 0 on Gamma-minus, otherwise one short
    step into the domain along -W u, returned as (t, state)."""
    d = p.domain
    if d.distance(x0) > BOUNDARY_TOL * d.diameter:
        raise OutsideDomain(f"{x0} is not in the closed domain")
    k, sp, _ = d.closest(x0)
    at_corner = any(math.dist(q, x0) <= CORNER_TOL for q in p.corners + p.inflow_ends)
    if not at_corner and p.classification.edges[k].label_at(sp) == Label.MINUS:
        return TraceResult(0.0, "OnGammaMinus", x0, 0.0, edge=k)
    speed = math.hypot(k0[0], k0[1])
    if speed == 0:
        raise OutsideDomain(f"{x0}: u vanishes on the boundary, no characteristic to follow")
    h = ENTRY_STEP * d.diameter / speed
    s = (x0[0], x0[1], 0.0)
    for _ in range(40):
        new, _, _ = _dp_step(f, 0.0, s, h, k0)
        if d.contains((new[0], new[1])):
            return h, new
        h *= 0.5
    raise OutsideDomain(f"{x0}: the backward characteristic does not enter the domain")


def _truncated(p, t, s, lmax, path) -> TraceResult:
    bound = math.exp(-t) * lmax
    return TraceResult(s[2], "Truncated", (s[0], s[1]), t, residual_bound=bound,
                       degraded=True, path=tuple(path) if path is not None else None)


def _error_norm(new: tuple, err: tuple, tol: float) -> float:
    return max(abs(e) / (tol * (1.0 + abs(v))) for e, v in zip(err, new))


def _cross(p: TransportProblem, f: _Rhs, t: float, s: tuple, h: float, k0: tuple,
           path, tol: float) -> TraceResult | float:
    """Bisect the step length until the last inside point and the first
    outside point are within the crossing tolerance.  If the shortened step
    fails the error test, return a smaller step length to continue with."""
    d = p.domain
    lo, hi = 0.0, h
    s_lo = s
    s_hi, err_hi, _ = _dp_step(f, t, s, h, k0)
    while math.dist(s_lo[:2], s_hi[:2]) > CROSSING_TOL and hi - lo > 1e-16 * max(1.0, t):
        mid = 0.5 * (lo + hi)
        try:
            s_mid, err_mid, _ = _dp_step(f, t, s, mid, k0)
        except (ArithmeticError, ValueError):
            hi, s_hi = mid, s_hi
            continue
        if d.contains((s_mid[0], s_mid[1])):
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi, err_hi = mid, s_mid, err_mid
    enorm = _error_norm(s_hi, err_hi, tol)
    if not math.isfinite(enorm) or enorm > 1.0:
        # the step that reaches the boundary is not accurate enough
        return hi * (max(0.2, 0.9 * enorm ** -0.2) if math.isfinite(enorm) else 0.25)
    X = (0.5 * (s_lo[0] + s_hi[0]), 0.5 * (s_lo[1] + s_hi[1]))
    T = t + 0.5 * (lo + hi)
    value = 0.5 * (s_lo[2] + s_hi[2])
    if path is not None:
        path.append(X)
    path = tuple(path) if path is not None else None
    k, sp, _ = d.closest(X)
    near = [q for q in p.corners + p.inflow_ends if math.dist(q, X) <= CORNER_TOL]
    if near:
        return TraceResult(value, "HitCorner", near[0], T, edge=k, degraded=True, path=path)
    e = d.edges[k]
    n = e.normal(sp)
    uv = p.u(*X)
    wun = p.W * (uv[0] * n[0] + uv[1] * n[1])
    if wun < -INFLOW_TOL:
        return TraceResult(value, "HitGammaMinus", X, T, edge=k, path=path)
    return TraceResult(value, "LeftThroughOther", X, T, edge=k, degraded=True, path=path)


def solve_at(p: TransportProblem, x0: Point2, tol: float = DEFAULT_TOL) -> float:
    return trace_backward(p, x0, tol).value


# ------------------------------------------------------------------ grids

@dataclass(frozen=True)
class GridPoint:
    x: float
    y: float
    z: Optional[float]
    status: str
    exit_point: Optional[Point2]
    T: Optional[float]


def _solve_point(args) -> tuple:
    p, x, y, tol, t_max = args
    r = trace_backward(p, (x, y), tol, t_max)
    return r.value, r.status, r.exit_point, r.T


def solve_grid(p: TransportProblem, nx: int, ny: int, tol: float = DEFAULT_TOL,
               t_max: float = T_MAX, threads: int = 1,
               bbox: Optional[tuple[float, float, float, float]] = None) -> list[GridPoint]:
    """Solve on the lattice spanning the bounding box.  Points that are not
    strictly inside are returned with status ``absent``."""
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be at least 2")
    x0, y0, x1, y1 = bbox or p.domain.bbox
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    pts = [(float(x), float(y)) for y in ys for x in xs]
    mask = p.domain.contains_many(np.array(pts))
    jobs = [(p, x, y, tol, t_max) for (x, y), m in zip(pts, mask) if m]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_solve_point, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_solve_point(j) for j in jobs]
    out = []
    it = iter(results)
    for (x, y), m in zip(pts, mask):
        if m:
            value, status, exit_point, T = next(it)
            out.append(GridPoint(x, y, value, status, exit_point, T))
        else:
            out.append(GridPoint(x, y, None, "absent", None, None))
    return out


class SolutionField:
    """The traced solution as a field: scalar calls and array evaluation
    (optionally spread over worker processes, order preserved)."""

    vectorized = True

    def __init__(self, p: TransportProblem, tol: float = DEFAULT_TOL, t_max: float = T_MAX,
                 threads: int = 1):
        self.p, self.tol, self.t_max, self.threads = p, tol, t_max, threads

    def __call__(self, x, y):
        if np.ndim(x) == 0 and np.ndim(y) == 0:
            return trace_backward(self.p, (float(x), float(y)), self.tol, self.t_max).value
        return self.array(x, y)

    def array(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        jobs = [(self.p, float(a), float(b), self.tol, self.t_max) for a, b in zip(x.ravel(), y.ravel())]
        if self.threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=self.threads) as pool:
                res = list(pool.map(_solve_point, jobs,
                                    chunksize=max(1, len(jobs) // (4 * self.threads))))
        else:
            res = [_solve_point(j) for j in jobs]
        return np.array([r[0] for r in res], dtype=float).reshape(x.shape)


def grid_to_csv(points: list[GridPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for g in points:
        ex = g.exit_point
        w.writerow([repr(g.x), repr(g.y), "" if g.z is None else repr(g.z), g.status,
                    "" if ex is None else repr(ex[0]), "" if ex is None else repr(ex[1]),
                    "" if g.T is None else repr(g.T)])
    return buf.getvalue()


# --------------------------------------------------------------- gradient

class Gradient(tuple):
    """(dz/dx, dz/dy) with a flag telling whether a one-sided stencil was used."""

    def __new__(cls, dx: float, dy: float, one_sided: bool = False):
        obj = super().__new__(cls, (dx, dy))
        obj.one_sided = one_sided
        return obj


def gradient_at(p: TransportProblem, x0: Point2, h: Optional[float] = None,
                tol: float = 1e-12) -> Gradient:
    """Central differences of the traced solution; a stencil point outside
    the domain switches that direction to a one-sided difference."""
    if h is None:
        h = 1e-5 * p.domain.diameter
    d = p.domain
    z0 = None
    one_sided = False
    grad = []
    for ex, ey in ((1.0, 0.0), (0.0, 1.0)):
        xp = (x0[0] + h * ex, x0[1] + h * ey)
        xm = (x0[0] - h * ex, x0[1] - h * ey)
        ip, im = d.contains(xp), d.contains(xm)
        # actual representable step
        hp = (xp[0] - x0[0]) + (xp[1] - x0[1])
        hm = (x0[0] - xm[0]) + (x0[1] - xm[1])
        if ip and im:
            grad.append((solve_at(p, xp, tol) - solve_at(p, xm, tol)) / (hp + hm))
            continue
        one_sided = True
        if z0 is None:
            z0 = solve_at(p, x0, tol)
        if ip:
            grad.append((solve_at(p, xp, tol) - z0) / hp)
        elif im:
            grad.append((z0 - solve_at(p, xm, tol)) / hm)
        else:
            raise OutsideDomain(f"no stencil point of {x0} with step {h:g} lies inside")
    return Gradient(grad[0], grad[1], one_sided)
