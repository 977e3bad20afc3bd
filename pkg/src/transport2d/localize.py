"""Localization near the endpoints of the inflow boundary.

The inflow boundary is split into pieces, the right-hand side is split with
smooth cutoffs, and near an exceptional point the problem is solved in a
rotated frame through the change of variables (x, y) -> (X, y) whose level
sets of X are the streamlines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import elementwise

from .classify import BoundaryClassification, ExceptionalPoint, gamma_minus_components
from .expr import Const, ScalarField, VectorField2, Var, add, mul, substitute
from .geometry import Domain, Edge, Point2, edge_distance

SEARCH_DIRECTIONS = 65  # odd, so the inward normal direction is sampled
SEARCH_RADII = 64
SEARCH_REFINE = 24
RING_SAMPLES = 256
RING_TOL = 1e-8
QUAD_RTOL = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_S = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

def _cumulative_matrix() -> np.ndarray:
    # row i: weights giving int_{-1}^{x_i} p where p interpolates the node values
    n = len(_GL_X)
    vinv = np.linalg.inv(np.polynomial.legendre.legvander(_GL_X, n - 1))
    cols = [np.polynomial.legendre.legval(_GL_X, np.polynomial.legendre.legint(vinv[:, j], lbnd=-1))
            for j in range(n)]
    return 0.5 * np.stack(cols, axis=1)


_GL_CUM = _cumulative_matrix()
_ROOT_TOL = dict(xatol=1e-16, xrtol=4e-16, fatol=0.0, frtol=0.0)


class LocalizationError(ValueError):
    pass


class PreconditionError(LocalizationError):
    pass


# ------------------------------------------------------------- quadrature

def _composite(g, a, b, panels: int):
    nodes = ((np.arange(panels)[:, None] + _GL_S[None, :]).ravel()) / panels
    w = np.tile(_GL_W, panels) / panels
    h = (b - a)[..., None]
    vals = g(a[..., None] + h * nodes)
    return (b - a) * np.sum(vals * w, axis=-1), np.abs(b - a) * np.sum(np.abs(vals) * w, axis=-1)


def integrate(g: Callable, a, b, rtol: float = QUAD_RTOL, scale: Optional[float] = None,
              max_panels: int = 1 << 12) -> np.ndarray:
    """Composite 8-point Gauss-Legendre on [a, b] (elementwise), doubling the
    panel count until two successive results agree relative to the integral
    of |g|, or to the rounding level of g (``scale`` times machine epsilon).
    ``g`` receives nodes with one trailing axis more than ``a``."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    panels = 1
    prev, _ = _composite(g, a, b, panels)
    while panels < max_panels:
        panels *= 2
        cur, mag = _composite(g, a, b, panels)
        if scale is None:
            scale = float(np.max(mag / np.where(a == b, 1.0, np.abs(b - a)), initial=0.0))
        floor = 64 * np.finfo(float).eps * scale * np.abs(b - a)
        if np.all(np.abs(cur - prev) <= rtol * mag + floor):
            return cur
        prev = cur
    raise LocalizationError("quadrature did not converge")


def _invert(f: Callable, target, lo, hi, *args) -> np.ndarray:
    """Root of f(x, *args) = target on the bracket [lo, hi], elementwise."""
    arrs = [np.asarray(v, dtype=float) for v in (target, lo, hi) + args]
    shape = np.broadcast_shapes(*(v.shape for v in arrs))
    target, lo, hi, *args = (np.broadcast_to(v, shape).copy() for v in arrs)
    args = tuple(args)
    f_lo, f_hi = f(lo, *args), f(hi, *args)
    # rounding at the ends of the range is snapped to the bracket ends
    slack = 1e-12 * np.abs(f_hi - f_lo)
    flo, fhi = f_lo - target, f_hi - target
    flo = np.where(np.abs(flo) <= slack, 0.0, flo)
    fhi = np.where(np.abs(fhi) <= slack, 0.0, fhi)
    if np.any(flo * fhi > 0):
        raise LocalizationError("value outside the range of the inverted map")
    out = np.where(flo == 0, lo, np.where(fhi == 0, hi, np.nan))
    todo = np.isnan(out)
    if np.any(todo):
        res = elementwise.find_root(lambda x, t, *a: f(x, *a) - t,
                                    (lo[todo], hi[todo]),
                                    args=(target[todo],) + tuple(a[todo] for a in args),
                                    tolerances=_ROOT_TOL)
        out[todo] = res.x
    return out


# -------------------------------------------------------- Gamma-minus pieces

@dataclass(frozen=True)
class GammaPiece:
    edge: int
    s0: float
    s1: float
    curve: Edge

    @property
    def length(self) -> float:
        return self.curve.length

    @property
    def endpoints(self) -> tuple[Point2, Point2]:
        return self.curve.start, self.curve.end


@dataclass(frozen=True)
class GammaDecomposition:
    pieces: tuple[GammaPiece, ...]
    mu0: float
    touching: tuple[tuple[int, int], ...]

    @property
    def q(self) -> int:
        return len(self.pieces)

    def piece_containing(self, m: Point2, tol: float = 1e-9) -> int:
        best = min(range(self.q), key=lambda j: self.pieces[j].curve.distance(m))
        if self.pieces[best].curve.distance(m) > tol:
            raise LocalizationError(f"{m} is not on the inflow boundary")
        return best


def decompose_gamma_minus(c: BoundaryClassification, d: Domain) -> GammaDecomposition:
    """One piece per maximal straight or circular part of the closure of
    Gamma-minus; mu0 is the least distance between pieces that do not touch."""
    pieces = []
    for comp in gamma_minus_components(c, d):
        for p in comp.pieces:
            e = d.edges[p.edge]
            pieces.append(GammaPiece(p.edge, p.s0, p.s1, e.sub(p.s0, p.s1)))
    if not pieces:
        raise LocalizationError("Gamma-minus is empty")
    q = len(pieces)
    mu0 = math.inf
    touching = []
    for j in range(q):
        for k in range(j + 1, q):
            dist = edge_distance(pieces[j].curve, pieces[k].curve)
            if dist <= 1e-12:
                touching.append((j, k))
            else:
                mu0 = min(mu0, dist)
    return GammaDecomposition(tuple(pieces), mu0, tuple(touching))


# ----------------------------------------------------------------- cutoffs

def _f(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def psi(s):
    """Smooth decreasing transition: 1 for s <= 0, 0 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    a, b = _f(1.0 - s), _f(s)
    return a / (a + b)


def _psi_scalar(s: float) -> float:
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0
    a, b = math.exp(-1.0 / (1.0 - s)), math.exp(-1.0 / s)
    return a / (a + b)


class GlobalField:
    """A field on the plane given by a scalar and an array evaluator."""

    def __init__(self, scalar: Callable[[float, float], float], array: Callable):
        self._scalar = scalar
        self._array = array

    def __call__(self, x: float, y: float) -> float:
        return self._scalar(x, y)

    def array(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self._array(x, y)


def theta_cutoff(piece: GammaPiece, mu: float) -> GlobalField:
    """1 within mu/2 of the piece, 0 beyond mu."""
    curve = piece.curve

    def scalar(x, y):
        return _psi_scalar(2.0 * curve.distance((x, y)) / mu - 1.0)

    def array(x, y):
        dist = curve.distances(np.stack([x, y], axis=-1))
        return psi(2.0 * dist / mu - 1.0)
    return GlobalField(scalar, array)


def _as_field(l) -> GlobalField:
    if isinstance(l, GlobalField):
        return l
    if isinstance(l, ScalarField):
        return GlobalField(l.__call__, l.array)
    if hasattr(l, "array"):
        return GlobalField(l, l.array)
    return GlobalField(l, np.vectorize(l, otypes=[float]))


@dataclass(frozen=True)
class RhsSplit:
    l_mu: GlobalField
    l_j: tuple[GlobalField, ...]
    mu: float


def split_rhs(l, dec: GammaDecomposition, mu: float) -> RhsSplit:
    """l = l_mu + sum_j l_j with l_j = theta_j (1 - theta_{j+1}) l and
    theta_{q+1} = 0."""
    if not (0 < mu <= 0.5 * dec.mu0):
        raise LocalizationError(f"mu must lie in (0, mu0/2] = (0, {0.5 * dec.mu0:.6g}]")
    lf = _as_field(l)
    thetas = [theta_cutoff(p, mu) for p in dec.pieces]
    q = len(thetas)

    def weight_scalar(j, x, y):
        nxt = thetas[j + 1](x, y) if j + 1 < q else 0.0
        return thetas[j](x, y) * (1.0 - nxt)

    def weight_array(j, x, y):
        nxt = thetas[j + 1].array(x, y) if j + 1 < q else 0.0
        return thetas[j].array(x, y) * (1.0 - nxt)

    def make(j):
        return GlobalField(lambda x, y: weight_scalar(j, x, y) * lf(x, y),
                           lambda x, y: weight_array(j, x, y) * lf.array(x, y))

    parts = tuple(make(j) for j in range(q))

    def rest_scalar(x, y):
        return (1.0 - sum(weight_scalar(j, x, y) for j in range(q))) * lf(x, y)

    def rest_array(x, y):
        return (1.0 - sum(weight_array(j, x, y) for j in range(q))) * lf.array(x, y)

    return RhsSplit(GlobalField(rest_scalar, rest_array), parts, mu)


# ------------------------------------------------------------- local frame

class LocalFrame:
    """Rotated coordinates at an exceptional point m: the local x axis is the
    inward normal -n_-(m), the local y axis the tangent tau_-(m), so the
    inflow piece is the positive y axis.

    For a vertex, u2 is extended to y < 0 by even reflection and u1 by
    u1(x, y) = -int_0^x du2/dy(t, y) dt, which keeps div u = 0 and
    u1(0, y) = 0.  Elsewhere the true field is used on both sides.
    """

    def __init__(self, origin: Point2, normal: Point2, tau: Point2, u1: ScalarField,
                 u2: ScalarField, W: float = 1.0, is_vertex: bool = True,
                 domain: Optional[Domain] = None, gamma_length: float = math.inf,
                 mu0: float = math.inf, side_clearance: float = math.inf,
                 search_bound: Optional[float] = None):
        self.origin = (float(origin[0]), float(origin[1]))
        self.ex = (-normal[0], -normal[1])
        self.ey = (float(tau[0]), float(tau[1]))
        self.u1, self.u2 = u1, u2
        self.W = abs(float(W))
        self.is_vertex = is_vertex
        self.domain = domain
        self.gamma_length = gamma_length
        self.mu0 = mu0
        self.side_clearance = side_clearance
        if search_bound is None:
            search_bound = domain.diameter if domain is not None else 1.0
        self.search_bound = min(search_bound, mu0)
        self.u20 = u2(0.0, 0.0)
        self.a = u1.eval_dy(0.0, 0.0)
        # magnitude of the field near m, for quadrature rounding floors
        self.scale = abs(self.u20) + abs(self.a) * self.search_bound

    @classmethod
    def from_local_fields(cls, u1: str | ScalarField, u2: str | ScalarField, **kw) -> "LocalFrame":
        """A frame given directly by local velocity components (for models)."""
        u1 = ScalarField.parse(u1) if isinstance(u1, str) else u1
        u2 = ScalarField.parse(u2) if isinstance(u2, str) else u2
        return cls((0.0, 0.0), (-1.0, 0.0), (0.0, 1.0), u1, u2, **kw)

    # coordinates
    def to_local(self, x, y):
        dx, dy = np.asarray(x, dtype=float) - self.origin[0], np.asarray(y, dtype=float) - self.origin[1]
        return (dx * self.ex[0] + dy * self.ex[1], dx * self.ey[0] + dy * self.ey[1])

    def to_global(self, xi, eta):
        xi, eta = np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
        return (self.origin[0] + xi * self.ex[0] + eta * self.ey[0],
                self.origin[1] + xi * self.ex[1] + eta * self.ey[1])

    def rotate(self, v: Point2) -> Point2:
        return (v[0] * self.ex[0] + v[1] * self.ex[1], v[0] * self.ey[0] + v[1] * self.ey[1])

    def in_domain(self, xi, eta) -> np.ndarray:
        if self.domain is None:
            return np.asarray(xi) >= 0
        gx, gy = self.to_global(xi, eta)
        return self.domain.contains_many(np.stack([np.atleast_1d(gx), np.atleast_1d(gy)], -1))

    # extended velocity
    def _reflect(self, y):
        return np.abs(y) if self.is_vertex else y

    def u2e(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.u2.array(x, self._reflect(y))

    def u1e(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = self.u1.array(x, y)
        if self.is_vertex:
            neg = y < 0
            if np.any(neg):
                xs, ys = x[neg], -y[neg]
                out[neg] = integrate(lambda t: self.u2.array_dy(t, ys[..., None]),
                                     np.zeros_like(xs), xs, scale=self.scale)
        return out

    def u1_axis(self, y) -> np.ndarray:
        """u1 on the local y axis (0 below the origin at a vertex)."""
        y = np.asarray(y, dtype=float)
        out = self.u1.array(np.zeros_like(y), y)
        if self.is_vertex:
            out = np.where(y < 0, 0.0, out)
        return out

    # change of variables
    def alpha(self, y) -> np.ndarray:
        """X on the local y axis: int_0^y u1(0, t) dt."""
        y = np.asarray(y, dtype=float)
        return integrate(lambda t: self.u1_axis(t), np.zeros_like(y), y, scale=self.scale)

    def X(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.flow(x, y) + self.alpha(y)

    def alpha_inverse(self, s, y_max: float) -> np.ndarray:
        return _invert(lambda y: self.alpha(y), s, 0.0, y_max)

    def flow(self, x, y) -> np.ndarray:
        """-int_0^x u2(s, y) ds, so that X = flow + alpha."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return -integrate(lambda t: self.u2e(t, y[..., None]), np.zeros_like(x), x, scale=self.scale)

    def x_on_level(self, X, t, x_max: float) -> np.ndarray:
        """x with X(x, t) = X (X increases with x where u2 < 0)."""
        return _invert(self.flow, np.asarray(X) - self.alpha(t), 0.0, x_max, t)

    def verify(self, samples: int = 100) -> None:
        """Check the sign pattern at the origin and the extension properties."""
        if abs(self.u1(0.0, 0.0)) > 1e-10:
            raise LocalizationError("u1(0,0) != 0: the point is not a zero of u.n")
        if not self.u20 < 0:
            raise LocalizationError("u.tau_- >= 0 at the exceptional point")
        if not self.a > 0:
            raise LocalizationError("d(u1)/dy(0,0) <= 0: the root of u.n is not simple")
        h = 1e-3 * min(self.search_bound, self.gamma_length)
        ys = np.geomspace(h * 1e-6, h, samples)
        if np.any(self.u1_axis(ys) <= 0):
            raise LocalizationError("u1(0, y) is not positive for small y > 0")
        if self.is_vertex:
            rng = np.random.default_rng(0)
            pts = rng.uniform([0.0, -h], [h, 0.0], size=(samples, 2))
            if np.any(self.u1_axis(pts[:, 1]) != 0):
                raise LocalizationError("extended u1 does not vanish on the negative y axis")
            eps = 1e-4 * h
            x, y = pts[:, 0] + eps, pts[:, 1] - eps
            div = ((self.u1e(x + eps, y) - self.u1e(x - eps, y))
                   + (self.u2e(x, y + eps) - self.u2e(x, y - eps))) / (2 * eps)
            scale = 1.0 + abs(self.u20) / h
            if np.max(np.abs(div)) > 1e-5 * scale:
                raise LocalizationError("extended field is not divergence-free")


def build_local_frame(m: ExceptionalPoint, d: Domain, u: VectorField2, W: float = 1.0,
                      gamma_length: Optional[float] = None, mu0: float = math.inf) -> LocalFrame:
    """Frame at an exceptional point satisfying the simple-root and tangent
    conditions; raises LocalizationError otherwise."""
    sw = 1.0 if W > 0 else -1.0
    uv = u(*m.m)
    if sw * (uv[0] * m.tau[0] + uv[1] * m.tau[1]) >= -1e-10:
        raise LocalizationError(f"u.tau_- > 0 at ({m.m[0]:.6g}, {m.m[1]:.6g}): "
                                "the tangent condition fails")
    if abs(m.boundary_derivative) <= 1e-8:
        raise LocalizationError(f"double root of u.n at ({m.m[0]:.6g}, {m.m[1]:.6g})")
    ex = (-m.normal[0], -m.normal[1])
    ey = m.tau
    # global x, y in terms of the local variables
    gx = add(Const(m.m[0]), add(mul(Const(ex[0]), Var("x")), mul(Const(ey[0]), Var("y"))))
    gy = add(Const(m.m[1]), add(mul(Const(ex[1]), Var("x")), mul(Const(ey[1]), Var("y"))))
    sub = {"x": gx, "y": gy}
    g1 = substitute(u.u1.value, sub)
    g2 = substitute(u.u2.value, sub)
    u1 = ScalarField(mul(Const(sw), add(mul(Const(ex[0]), g1), mul(Const(ex[1]), g2))))
    u2 = ScalarField(mul(Const(sw), add(mul(Const(ey[0]), g1), mul(Const(ey[1]), g2))))
    edge = d.edges[m.on_edge]
    clearance = min(math.dist(m.m, edge.start), math.dist(m.m, edge.end))
    if gamma_length is None:
        gamma_length = edge.length
    frame = LocalFrame(m.m, m.normal, m.tau, u1, u2, W, m.is_vertex, d, gamma_length, mu0,
                       clearance if not m.is_vertex else math.inf)
    frame.verify()
    return frame


# --------------------------------------------------------------- constants

@dataclass(frozen=True)
class LocalConstants:
    u20: float
    a: float
    mu2: float
    mu3: float
    mu4: float
    mu5: float
    K: float
    y_M: float
    alpha_yM: float
    r1: float
    r2: float
    r_star: float
    mu_admissible: float
    gamma_length: float
    fourth_case: bool

    def as_rows(self) -> list[tuple[str, float]]:
        names = ("mu2", "mu3", "mu4", "mu5", "K", "y_M", "r1", "r2", "r_star", "mu_admissible")
        return [(n, getattr(self, n)) for n in names]


def _half_ball(r: float) -> tuple[np.ndarray, np.ndarray]:
    ang = np.linspace(-0.5 * math.pi, 0.5 * math.pi, SEARCH_DIRECTIONS)
    rad = np.linspace(r / SEARCH_RADII, r, SEARCH_RADII)
    R, A = np.meshgrid(rad, ang)
    return (R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()


def _largest_radius(ok: Callable[[float], bool], r_max: float, floor: float, what: str) -> float:
    r = r_max
    while not ok(r):
        r *= 0.5
        if r < floor:
            raise LocalizationError(f"degenerate frame: no radius above {floor:.3g} satisfies {what}")
    if r == r_max:
        return r
    lo, hi = r, 2.0 * r
    for _ in range(SEARCH_REFINE):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def compute_constants(f: LocalFrame, gamma_length: Optional[float] = None) -> LocalConstants:
    """Near-maximal admissible radii by halving then bisection on sampled
    inequalities; the other constants by their closed formulas."""
    gl = f.gamma_length if gamma_length is None else gamma_length
    u20, a = f.u20, f.a
    floor = 1e-8 * (f.domain.diameter if f.domain is not None else 1.0)

    def u2_negative(r):
        x, y = _half_ball(r)
        return bool(np.all(f.u2e(x, y) < 0))

    mu2 = _largest_radius(u2_negative, f.search_bound, floor, "u2 < 0")
    fourth = not f.is_vertex

    def bounds(r):
        x, y = _half_ball(r)
        v = f.u2e(x, y)
        if np.any(v < 1.5 * u20) or np.any(v > 0.5 * u20):
            return False
        ys = np.linspace(r / SEARCH_RADII, r, SEARCH_RADII)
        if fourth:
            ys = np.concatenate([-ys, ys])
            w = np.abs(f.u1_axis(ys))
        else:
            w = f.u1_axis(ys)
        ay = a * np.abs(ys)
        return bool(np.all(w >= 0.5 * ay) and np.all(w <= 1.5 * ay))

    cap3 = min(mu2, gl, f.side_clearance if fourth else math.inf)
    mu3 = _largest_radius(bounds, cap3, floor, "the bounds on u2 and u1(0, y)")
    mu4 = abs(u20) / a
    y_M = min(mu3 / 6.0, mu4, gl)
    alpha_yM = float(f.alpha(np.array(y_M)))

    def level_in_range(r):
        x, y = _half_ball(r)
        X = f.X(x, y)
        return bool(np.all(X >= -1e-15 * alpha_yM) and np.all(X <= alpha_yM))

    mu5 = _largest_radius(level_in_range, mu3, floor, "0 <= X <= alpha(y_M)")
    K = min(mu3 / 6.0, mu4, mu5, gl)
    r1 = min(abs(u20) * K / 12.0, a * K * K / 288.0)
    r2 = K * abs(u20) / 6.0
    r_star = 2.0 * math.sqrt(r1 / a)
    mu_adm = min(r1 / 6.0, 0.5 * f.mu0)
    return LocalConstants(u20, a, mu2, mu3, mu4, mu5, K, y_M, alpha_yM, r1, r2, r_star,
                          mu_adm, gl, fourth)


def injectivity_check(f: LocalFrame, r: float, n: int = 64) -> bool:
    """(x, y) -> (X(x, y), y) is one-to-one on the sampled half ball B+_r:
    y is kept, so it suffices that X strictly increases in x along each row."""
    for y in np.linspace(-r, r, n + 2)[1:-1]:
        x = np.linspace(0.0, math.sqrt(max(r * r - y * y, 0.0)), n)
        if np.any(np.diff(f.X(x, np.full_like(x, y))) <= 0):
            return False
    return True


def k_function(f: LocalFrame, xi, eta):
    return abs(f.u20) * np.abs(xi) + 0.5 * abs(f.a) * np.asarray(eta) ** 2


def lambda_cutoff(f: LocalFrame, mu: float) -> GlobalField:
    """1 where k <= mu, 0 where k >= 2 mu (k in the frame's coordinates)."""
    def scalar(x, y):
        xi, eta = f.to_local(x, y)
        return _psi_scalar(float(k_function(f, xi, eta)) / mu - 1.0)

    def array(x, y):
        xi, eta = f.to_local(x, y)
        return psi(k_function(f, xi, eta) / mu - 1.0)
    return GlobalField(scalar, array)


def inclusion_chain_check(f: LocalFrame, r: float, n: int = 4096, seed: int = 0) -> tuple[bool, bool]:
    """Sampled check of B_{r/|u2(0,0)|} in {k <= r} in B_{2 sqrt(r/a)}."""
    if r > f.u20 ** 2 / f.a * (1 + 1e-12):
        raise PreconditionError("r must not exceed u2(0,0)^2 / (du1/dy)(0,0)")
    rng = np.random.default_rng(seed)
    rad = r / abs(f.u20) * np.sqrt(rng.uniform(0, 1, n))
    ang = rng.uniform(0, 2 * math.pi, n)
    first = bool(np.all(k_function(f, rad * np.cos(ang), rad * np.sin(ang)) <= r * (1 + 1e-12)))
    big = 2.0 * math.sqrt(r / f.a)
    pts = rng.uniform(-1.5 * big, 1.5 * big, size=(4 * n, 2))
    inside_k = k_function(f, pts[:, 0], pts[:, 1]) <= r
    second = bool(np.all(np.hypot(pts[inside_k, 0], pts[inside_k, 1]) <= big * (1 + 1e-12)))
    return first, second


# ---------------------------------------------------------- local solution

def _lbar_local(f: LocalFrame, lbar):
    lf = _as_field(lbar)

    def g(xi, eta):
        gx, gy = f.to_global(xi, eta)
        return lf.array(gx, gy)
    return g


def local_solution(f: LocalFrame, c: LocalConstants, lbar, p) -> np.ndarray | float:
    """Integral form of the local solution at local point(s) ``p``:

    z = int_{alpha^-1(X)}^{y} exp(V(X,t) - V(X,y)) Lbar(X,t) / (W U2(X,t)) dt,

    with V(X,t) - V(X,y) = int_y^t dtheta / (W U2(X,theta)).
    """
    P = np.asarray(p, dtype=float)
    scalar = P.ndim == 1
    P = np.atleast_2d(P)
    xi, eta = P[:, 0], P[:, 1]
    if np.any(xi < -1e-15) or np.any(np.hypot(xi, eta) > c.K * (1 + 1e-12)):
        raise LocalizationError("point outside the half ball B+_K")
    Xp = f.X(xi, eta)
    if np.any(Xp < -1e-15 * c.alpha_yM) or np.any(Xp > c.alpha_yM):
        raise LocalizationError("X outside [0, alpha(y_M)]")
    Xp = np.clip(Xp, 0.0, c.alpha_yM)
    top = f.alpha_inverse(Xp, c.y_M)
    # on gamma the interval is empty; what is left is inversion noise
    top = np.where(np.abs(top - eta) <= 1e-12 * c.y_M, eta, top)
    lb = _lbar_local(f, lbar)
    z = _level_integral(f, lb, Xp, eta, top, c.mu2) + 0.0
    return float(z[0]) if scalar else z


def _level_integral(f: LocalFrame, lb, Xp, eta, top, x_max: float, rtol: float = 1e-10,
                    max_panels: int = 1 << 10) -> np.ndarray:
    # Along each level X = Xp: nodes t on [eta, top], the point x_t on the level,
    # and V(t) - V(eta) by spectral cumulative integration over the same panels.
    W = f.W
    h_all = top - eta

    def evaluate(panels):
        nodes = ((np.arange(panels)[:, None] + _GL_S[None, :]) / panels)
        t = eta[:, None, None] + h_all[:, None, None] * nodes
        Xb = np.broadcast_to(Xp[:, None, None], t.shape)
        xt = f.x_on_level(Xb, t, x_max)
        inv = 1.0 / (W * f.u2e(xt, t))
        h = (h_all / panels)[:, None, None]
        within = h * (inv @ _GL_CUM.T)         # from panel start to node
        totals = h[..., 0] * np.sum(inv * _GL_W, axis=-1)  # whole panels
        starts = np.cumsum(totals, axis=-1) - totals
        dV = within + starts[..., None]
        g = np.exp(dV) * lb(xt, t) * inv
        w = (h * _GL_W)
        return -np.sum(g * w, axis=(1, 2)), np.sum(np.abs(g) * w, axis=(1, 2))

    panels = 1
    prev, _ = evaluate(panels)
    while panels < max_panels:
        panels *= 2
        cur, mag = evaluate(panels)
        if np.all(np.abs(cur - prev) <= rtol * mag + 1e-300):
            return np.where(h_all <= 0, 0.0, cur)
        prev = cur
    raise LocalizationError("quadrature did not converge")


@dataclass(frozen=True)
class RingCheck:
    max_abs: float
    inner: float
    outer: float
    points: int


def ring_points(f: LocalFrame, inner: float, outer: float, n: int = RING_SAMPLES) -> np.ndarray:
    """Local points of the ring inner <= |p| <= outer inside the closed domain."""
    nr = int(round(math.sqrt(n)))
    na = n // nr
    out = []
    for r in np.linspace(inner, outer, nr):
        if f.domain is not None:
            ivs = f.domain.circle_intervals(f.origin, r)
            total = sum(b - a for a, b in ivs)
            for a, b in ivs:
                k = max(2, int(round(na * (b - a) / total)))
                for ang in np.linspace(a, b, k):
                    gx = f.origin[0] + r * math.cos(ang)
                    gy = f.origin[1] + r * math.sin(ang)
                    out.append(f.to_local(gx, gy))
        else:
            for ang in np.linspace(-0.5 * math.pi, 0.5 * math.pi, na):
                out.append((r * math.cos(ang), r * math.sin(ang)))
    pts = np.array(out, dtype=float)
    pts[:, 0] = np.maximum(pts[:, 0], 0.0)
    return pts


def ring_vanish_check(f: LocalFrame, c: LocalConstants, lbar, mu: float) -> RingCheck:
    """Max |local solution| on the ring between r* and r2/|u2(0,0)|, which
    must vanish once mu <= r1/6."""
    if mu > c.r1 / 6.0 * (1 + 1e-12):
        raise PreconditionError(f"mu = {mu:.6g} exceeds r1/6 = {c.r1 / 6.0:.6g}")
    inner, outer = c.r_star, c.r2 / abs(c.u20)
    pts = ring_points(f, inner, outer)
    z = local_solution(f, c, lbar, pts)
    return RingCheck(float(np.max(np.abs(z))), inner, outer, len(pts))


class ExtendedSolution:
    """Local solution inside B_{r*} and zero elsewhere in the domain."""

    def __init__(self, f: LocalFrame, c: LocalConstants, lbar):
        self.f, self.c, self.lbar = f, c, lbar

    def __call__(self, x: float, y: float) -> float:
        xi, eta = self.f.to_local(x, y)
        if math.hypot(xi, eta) >= self.c.r_star:
            return 0.0
        if self.f.domain is not None and not self.f.domain.contains((x, y)):
            raise LocalizationError(f"({x:.6g}, {y:.6g}) is outside the domain")
        return local_solution(self.f, self.c, self.lbar, (max(float(xi), 0.0), float(eta)))


def extend_by_zero(f: LocalFrame, c: LocalConstants, lbar, mu: float,
                   ring: Optional[RingCheck] = None) -> ExtendedSolution:
    ring = ring or ring_vanish_check(f, c, lbar, mu)
    if ring.max_abs > RING_TOL:
        raise LocalizationError(f"ring check failed (max |z| = {ring.max_abs:.3e}); "
                                "refusing to extend by zero")
    return ExtendedSolution(f, c, lbar)


def local_rhs(f: LocalFrame, split: RhsSplit, j: int, mu: float) -> GlobalField:
    """lbar_{j,mu} = lambda_mu l_{j,mu}."""
    lam = lambda_cutoff(f, mu)
    lj = split.l_j[j]
    return GlobalField(lambda x, y: lam(x, y) * lj(x, y),
                       lambda x, y: lam.array(x, y) * lj.array(x, y))


def frames_for(exceptional: Sequence[ExceptionalPoint], dec: GammaDecomposition, d: Domain,
               u: VectorField2, W: float = 1.0) -> list[tuple[int, LocalFrame]]:
    """A frame for every exceptional point, tagged with its piece index."""
    out = []
    for m in exceptional:
        j = dec.piece_containing(m.m)
        out.append((j, build_local_frame(m, d, u, W, dec.pieces[j].length, dec.mu0)))
    return out
