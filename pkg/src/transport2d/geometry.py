"""Piecewise-smooth boundaries made of segments and circular arcs.

Edges are parameterized by ``s`` in ``[0, 1]`` and traversed with the domain
on the left, so the outward normal is the tangent rotated clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

TAU = 2.0 * math.pi
NEAR_BOUNDARY = 1e-12
CLOSURE_TOL = 1e-12

Point2 = tuple[float, float]


class GeometryError(ValueError):
    pass


def _pt(p) -> Point2:
    return (float(p[0]), float(p[1]))


def _norm(v) -> float:
    return math.hypot(v[0], v[1])


def _unit(v) -> Point2:
    n = _norm(v)
    return (v[0] / n, v[1] / n)


def _cross(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1]


def _wrap(a: float) -> float:
    """Angle in (-pi, pi]."""
    a = math.fmod(a, TAU)
    if a <= -math.pi:
        a += TAU
    elif a > math.pi:
        a -= TAU
    return a


@dataclass(frozen=True)
class Segment:
    a: Point2
    b: Point2

    def __post_init__(self):
        object.__setattr__(self, "a", _pt(self.a))
        object.__setattr__(self, "b", _pt(self.b))
        if self.length == 0.0:
            raise GeometryError(f"segment {self.a}->{self.b} has zero length")

    @property
    def length(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    @property
    def start(self) -> Point2:
        return self.a

    @property
    def end(self) -> Point2:
        return self.b

    def point(self, s: float) -> Point2:
        return (self.a[0] + s * (self.b[0] - self.a[0]), self.a[1] + s * (self.b[1] - self.a[1]))

    def points(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([self.a[0] + s * (self.b[0] - self.a[0]),
                         self.a[1] + s * (self.b[1] - self.a[1])], axis=-1)

    def tangent(self, s: float = 0.0) -> Point2:
        return _unit((self.b[0] - self.a[0], self.b[1] - self.a[1]))

    def normal(self, s: float = 0.0) -> Point2:
        t = self.tangent(s)
        return (t[1], -t[0])

    def normals(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        n = self.normal()
        return np.broadcast_to(np.array(n), s.shape + (2,)).copy()

    def tangents(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(np.array(self.tangent()), s.shape + (2,)).copy()

    def normal_rate(self, s: float = 0.0) -> Point2:
        """d n / d(arclength)."""
        return (0.0, 0.0)

    def closest_param(self, p) -> float:
        dx, dy = self.b[0] - self.a[0], self.b[1] - self.a[1]
        s = ((p[0] - self.a[0]) * dx + (p[1] - self.a[1]) * dy) / (dx * dx + dy * dy)
        return min(1.0, max(0.0, s))

    def distance(self, p) -> float:
        q = self.point(self.closest_param(p))
        return math.hypot(p[0] - q[0], p[1] - q[1])

    def distances(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        dx, dy = self.b[0] - self.a[0], self.b[1] - self.a[1]
        s = ((pts[..., 0] - self.a[0]) * dx + (pts[..., 1] - self.a[1]) * dy) / (dx * dx + dy * dy)
        s = np.clip(s, 0.0, 1.0)
        qx = self.a[0] + s * dx
        qy = self.a[1] + s * dy
        return np.hypot(pts[..., 0] - qx, pts[..., 1] - qy)

    def sub(self, s0: float, s1: float) -> "Segment":
        return Segment(self.point(s0), self.point(s1))

    def winding_angle(self, p) -> float:
        va = (self.a[0] - p[0], self.a[1] - p[1])
        vb = (self.b[0] - p[0], self.b[1] - p[1])
        return math.atan2(_cross(va, vb), _dot(va, vb))

    def winding_angles(self, pts: np.ndarray) -> np.ndarray:
        ax = self.a[0] - pts[..., 0]
        ay = self.a[1] - pts[..., 1]
        bx = self.b[0] - pts[..., 0]
        by = self.b[1] - pts[..., 1]
        return np.arctan2(ax * by - ay * bx, ax * bx + ay * by)

    def bbox(self) -> tuple[float, float, float, float]:
        return (min(self.a[0], self.b[0]), min(self.a[1], self.b[1]),
                max(self.a[0], self.b[0]), max(self.a[1], self.b[1]))

    def area_term(self) -> float:
        """Contribution to the signed area, the integral of x dy."""
        return 0.5 * (self.a[0] + self.b[0]) * (self.b[1] - self.a[1])

    def hline_crossings(self, y0: float) -> list[float]:
        ya, yb = self.a[1], self.b[1]
        if (ya - y0) * (yb - y0) > 0 or ya == yb:
            return []
        s = (y0 - ya) / (yb - ya)
        return [self.a[0] + s * (self.b[0] - self.a[0])]

    def circle_crossings(self, c, r: float) -> list[Point2]:
        dx, dy = self.b[0] - self.a[0], self.b[1] - self.a[1]
        fx, fy = self.a[0] - c[0], self.a[1] - c[1]
        A = dx * dx + dy * dy
        B = 2 * (fx * dx + fy * dy)
        C = fx * fx + fy * fy - r * r
        disc = B * B - 4 * A * C
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        out = []
        for s in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
            if -1e-14 <= s <= 1 + 1e-14:
                out.append(self.point(min(1.0, max(0.0, s))))
        return out


@dataclass(frozen=True)
class Arc:
    """Circular arc ``center + r (cos t, sin t)`` for t from ``t_start`` to ``t_end``.

    ``t_end > t_start`` traverses counterclockwise (domain inside the circle);
    ``t_end < t_start`` traverses clockwise (domain outside).
    """

    center: Point2
    radius: float
    t_start: float
    t_end: float

    def __post_init__(self):
        object.__setattr__(self, "center", _pt(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))
        if not self.radius > 0:
            raise GeometryError("arc radius must be positive")
        if self.t_end == self.t_start:
            raise GeometryError("arc has zero sweep")
        if abs(self.sweep) > TAU + 1e-12:
            raise GeometryError("arc sweep exceeds a full turn")

    @property
    def sweep(self) -> float:
        return self.t_end - self.t_start

    @property
    def orientation(self) -> float:
        return 1.0 if self.sweep > 0 else -1.0

    @property
    def is_full_circle(self) -> bool:
        return abs(abs(self.sweep) - TAU) <= 1e-12

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    def angle(self, s: float) -> float:
        return self.t_start + s * self.sweep

    @property
    def start(self) -> Point2:
        return self.point(0.0)

    @property
    def end(self) -> Point2:
        return self.point(1.0)

    def point(self, s: float) -> Point2:
        t = self.angle(s)
        return (self.center[0] + self.radius * math.cos(t), self.center[1] + self.radius * math.sin(t))

    def points(self, s) -> np.ndarray:
        t = self.t_start + np.asarray(s, dtype=float) * self.sweep
        return np.stack([self.center[0] + self.radius * np.cos(t),
                         self.center[1] + self.radius * np.sin(t)], axis=-1)

    def tangent(self, s: float) -> Point2:
        t = self.angle(s)
        o = self.orientation
        return (-o * math.sin(t), o * math.cos(t))

    def tangents(self, s) -> np.ndarray:
        t = self.t_start + np.asarray(s, dtype=float) * self.sweep
        o = self.orientation
        return np.stack([-o * np.sin(t), o * np.cos(t)], axis=-1)

    def normal(self, s: float) -> Point2:
        t = self.angle(s)
        o = self.orientation
        return (o * math.cos(t), o * math.sin(t))

    def normals(self, s) -> np.ndarray:
        t = self.t_start + np.asarray(s, dtype=float) * self.sweep
        o = self.orientation
        return np.stack([o * np.cos(t), o * np.sin(t)], axis=-1)

    def normal_rate(self, s: float) -> Point2:
        """d n / d(arclength) = tangent / radius for either orientation."""
        t = self.tangent(s)
        return (t[0] / self.radius, t[1] / self.radius)

    def _param_of_angle(self, phi: float) -> float | None:
        """Parameter s of the polar angle ``phi`` if it lies on the arc."""
        rel = (phi - self.t_start) * self.orientation
        rel = math.fmod(rel, TAU)
        if rel < 0:
            rel += TAU
        span = abs(self.sweep)
        if rel <= span + 1e-15:
            return min(1.0, rel / span)
        if TAU - rel <= 1e-15:
            return 0.0
        return None

    def closest_param(self, p) -> float:
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        if dx == 0.0 and dy == 0.0:
            return 0.0
        s = self._param_of_angle(math.atan2(dy, dx))
        if s is not None:
            return s
        d0 = math.hypot(*(np.subtract(p, self.start)))
        d1 = math.hypot(*(np.subtract(p, self.end)))
        return 0.0 if d0 <= d1 else 1.0

    def distance(self, p) -> float:
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        rho = math.hypot(dx, dy)
        if rho == 0.0:
            return self.radius
        if self._param_of_angle(math.atan2(dy, dx)) is not None:
            return abs(rho - self.radius)
        a, b = self.start, self.end
        return min(math.hypot(p[0] - a[0], p[1] - a[1]), math.hypot(p[0] - b[0], p[1] - b[1]))

    def distances(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        dx = pts[..., 0] - self.center[0]
        dy = pts[..., 1] - self.center[1]
        rho = np.hypot(dx, dy)
        phi = np.arctan2(dy, dx)
        rel = np.mod((phi - self.t_start) * self.orientation, TAU)
        on = (rel <= abs(self.sweep) + 1e-15) | (TAU - rel <= 1e-15) | self.is_full_circle
        a, b = self.start, self.end
        dend = np.minimum(np.hypot(pts[..., 0] - a[0], pts[..., 1] - a[1]),
                          np.hypot(pts[..., 0] - b[0], pts[..., 1] - b[1]))
        return np.where(on, np.abs(rho - self.radius), dend)

    def sub(self, s0: float, s1: float) -> "Arc":
        return Arc(self.center, self.radius, self.angle(s0), self.angle(s1))

    def winding_angle(self, p) -> float:
        """Continuous change of the polar angle of ``point(s) - p`` along the arc."""
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        inside_circle = dx * dx + dy * dy < self.radius * self.radius
        if self.is_full_circle:
            return TAU * self.orientation if inside_circle else 0.0
        a, b = self.start, self.end
        va = (a[0] - p[0], a[1] - p[1])
        vb = (b[0] - p[0], b[1] - p[1])
        chord = math.atan2(_cross(va, vb), _dot(va, vb))
        if not inside_circle:
            return chord
        # p inside the circle: it lies in the region bounded by arc and chord
        # exactly when it is on the same side of the chord as the arc midpoint
        m = self.point(0.5)
        cd = (b[0] - a[0], b[1] - a[1])
        side_m = _cross(cd, (m[0] - a[0], m[1] - a[1]))
        side_p = _cross(cd, (p[0] - a[0], p[1] - a[1]))
        if side_m * side_p > 0:
            return chord + TAU * self.orientation
        return chord

    def winding_angles(self, pts: np.ndarray) -> np.ndarray:
        dx = pts[..., 0] - self.center[0]
        dy = pts[..., 1] - self.center[1]
        inside_circle = dx * dx + dy * dy < self.radius * self.radius
        if self.is_full_circle:
            return np.where(inside_circle, TAU * self.orientation, 0.0)
        a, b = self.start, self.end
        ax, ay = a[0] - pts[..., 0], a[1] - pts[..., 1]
        bx, by = b[0] - pts[..., 0], b[1] - pts[..., 1]
        chord = np.arctan2(ax * by - ay * bx, ax * bx + ay * by)
        m = self.point(0.5)
        cdx, cdy = b[0] - a[0], b[1] - a[1]
        side_m = cdx * (m[1] - a[1]) - cdy * (m[0] - a[0])
        side_p = cdx * (pts[..., 1] - a[1]) - cdy * (pts[..., 0] - a[0])
        return chord + np.where(inside_circle & (side_m * side_p > 0), TAU * self.orientation, 0.0)

    def bbox(self) -> tuple[float, float, float, float]:
        pts = [self.start, self.end]
        for k in range(-8, 9):
            phi = k * math.pi / 2
            if self._param_of_angle(phi) is not None:
                pts.append((self.center[0] + self.radius * math.cos(phi),
                            self.center[1] + self.radius * math.sin(phi)))
        xs = [q[0] for q in pts]
        ys = [q[1] for q in pts]
        return (min(xs), min(ys), max(xs), max(ys))

    def area_term(self) -> float:
        cx, r = self.center[0], self.radius
        t0, t1 = self.t_start, self.t_end

        def prim(t):
            return cx * r * math.sin(t) + r * r * (0.5 * t + 0.25 * math.sin(2 * t))

        return prim(t1) - prim(t0)

    def hline_crossings(self, y0: float) -> list[float]:
        dy = y0 - self.center[1]
        if abs(dy) > self.radius:
            return []
        h = math.sqrt(max(0.0, self.radius * self.radius - dy * dy))
        out = []
        for x in (self.center[0] - h, self.center[0] + h):
            if self._param_of_angle(math.atan2(dy, x - self.center[0])) is not None:
                out.append(x)
        return out

    def circle_crossings(self, c, r: float) -> list[Point2]:
        dx, dy = self.center[0] - c[0], self.center[1] - c[1]
        d = math.hypot(dx, dy)
        R = self.radius
        if d == 0.0 or d > r + R or d < abs(r - R):
            return []
        a = (r * r - R * R + d * d) / (2 * d)
        h = math.sqrt(max(0.0, r * r - a * a))
        mx, my = c[0] + a * dx / d, c[1] + a * dy / d
        out = []
        for sgn in (1.0, -1.0):
            q = (mx - sgn * h * dy / d, my + sgn * h * dx / d)
            ang = math.atan2(q[1] - self.center[1], q[0] - self.center[0])
            if self._param_of_angle(ang) is not None:
                out.append(q)
        return out


Edge = Union[Segment, Arc]


@dataclass(frozen=True)
class VertexInfo:
    point: Point2
    inner_angle: float
    edge_in: int
    edge_out: int


def outward_normal(e: Edge, s: float) -> Point2:
    if not -1e-12 <= s <= 1 + 1e-12:
        raise GeometryError("edge parameter outside [0, 1]")
    return e.normal(s)


def distance_to_edge(p, e: Edge) -> float:
    return e.distance(_pt(p))


def tangent_toward_gamma_minus(m, gamma_minus_edge: Edge) -> Point2:
    """Unit tangent at the endpoint ``m`` pointing along the edge into it."""
    m = _pt(m)
    e = gamma_minus_edge
    if math.dist(m, e.start) <= 1e-12:
        return e.tangent(0.0)
    if math.dist(m, e.end) <= 1e-12:
        t = e.tangent(1.0)
        return (-t[0], -t[1])
    raise GeometryError(f"{m} is not an endpoint of the edge")


class Domain:
    """A simply connected domain bounded by a closed chain of edges."""

    def __init__(self, edges: Sequence[Edge]):
        self.edges: tuple[Edge, ...] = tuple(edges)
        if not self.edges:
            raise GeometryError("domain has no edges")
        n = len(self.edges)
        for i, e in enumerate(self.edges):
            nxt = self.edges[(i + 1) % n]
            gap = math.dist(e.end, nxt.start)
            if gap > CLOSURE_TOL:
                raise GeometryError(
                    f"edges {i} and {(i + 1) % n} do not meet (gap {gap:.3e})")
        area = sum(e.area_term() for e in self.edges)
        if area <= 0:
            raise GeometryError("boundary must be traversed counterclockwise (domain on the left)")
        self.area = area
        self.vertices: tuple[VertexInfo, ...] = tuple(self._vertices())
        xs0, ys0, xs1, ys1 = zip(*(e.bbox() for e in self.edges))
        self.bbox = (min(xs0), min(ys0), max(xs1), max(ys1))
        self.diameter = math.hypot(self.bbox[2] - self.bbox[0], self.bbox[3] - self.bbox[1])

    def _vertices(self) -> Iterable[VertexInfo]:
        n = len(self.edges)
        for i, e in enumerate(self.edges):
            prev = self.edges[(i - 1) % n]
            t_in = prev.tangent(1.0)
            t_out = e.tangent(0.0)
            turn = math.atan2(_cross(t_in, t_out), _dot(t_in, t_out))
            yield VertexInfo(e.start, math.pi - turn, (i - 1) % n, i)

    def __repr__(self) -> str:
        return f"Domain({list(self.edges)!r})"

    # --------------------------------------------------------------- queries
    def distance(self, p) -> float:
        return min(e.distance(p) for e in self.edges)

    def distances(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.full(pts.shape[:-1], np.inf)
        for e in self.edges:
            out = np.minimum(out, e.distances(pts))
        return out

    def closest(self, p) -> tuple[int, float, float]:
        """(edge index, parameter, distance) of the nearest boundary point."""
        best = (0, 0.0, math.inf)
        for i, e in enumerate(self.edges):
            s = e.closest_param(p)
            d = math.dist(p, e.point(s))
            if d < best[2]:
                best = (i, s, d)
        return best

    def winding_number(self, p) -> int:
        total = sum(e.winding_angle(p) for e in self.edges)
        return int(round(total / TAU))

    def locate(self, p) -> tuple[bool, bool]:
        """(strictly inside, within the near-boundary tolerance)."""
        p = _pt(p)
        if self.distance(p) <= NEAR_BOUNDARY:
            return (False, True)
        return (self.winding_number(p) != 0, False)

    def contains(self, p) -> bool:
        return self.locate(p)[0]

    def winding_numbers(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        total = np.zeros(pts.shape[:-1])
        for e in self.edges:
            total += e.winding_angles(pts)
        return np.rint(total / TAU).astype(int)

    def contains_many(self, pts) -> np.ndarray:
        """Vectorized ``contains``."""
        pts = np.asarray(pts, dtype=float)
        return (self.winding_numbers(pts) != 0) & (self.distances(pts) > NEAR_BOUNDARY)

    def is_convex(self) -> bool:
        if any(isinstance(e, Arc) and e.orientation < 0 for e in self.edges):
            return False
        return all(v.inner_angle <= math.pi + 1e-12 for v in self.vertices)

    def hline_intervals(self, y0: float) -> list[tuple[float, float]]:
        """Maximal x-intervals of the horizontal line y = y0 inside the domain."""
        xs = sorted({x for e in self.edges for x in e.hline_crossings(y0)})
        out = []
        for a, b in zip(xs[:-1], xs[1:]):
            if b - a <= 1e-15 * (1 + abs(a)):
                continue
            if self.winding_number((0.5 * (a + b), y0)) != 0:
                if out and abs(out[-1][1] - a) <= 1e-15 * (1 + abs(a)):
                    out[-1] = (out[-1][0], b)
                else:
                    out.append((a, b))
        return out

    def circle_intervals(self, c, r: float) -> list[tuple[float, float]]:
        """Angular intervals (radians, increasing, possibly beyond 2 pi) of the
        circle |p - c| = r lying inside the domain."""
        c = _pt(c)
        angs = set()
        for e in self.edges:
            for q in e.circle_crossings(c, r):
                angs.add(math.atan2(q[1] - c[1], q[0] - c[0]) % TAU)
        angs = sorted(angs)
        if not angs:
            probe = (c[0] + r, c[1])
            return [(0.0, TAU)] if self.winding_number(probe) != 0 else []
        out = []
        k = len(angs)
        for i in range(k):
            a = angs[i]
            b = angs[(i + 1) % k] + (TAU if i == k - 1 else 0.0)
            if b - a <= 1e-15:
                continue
            mid = 0.5 * (a + b)
            probe = (c[0] + r * math.cos(mid), c[1] + r * math.sin(mid))
            if self.winding_number(probe) != 0 and self.distance(probe) > 0:
                out.append((a, b))
        # merge pieces that meet at a tangency
        merged: list[tuple[float, float]] = []
        for a, b in out:
            if merged and abs(merged[-1][1] - a) <= 1e-14:
                merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        if len(merged) > 1 and abs(merged[-1][1] - (merged[0][0] + TAU)) <= 1e-14:
            first = merged.pop(0)
            merged[-1] = (merged[-1][0], first[1] + TAU)
        return merged


def inside(d: Domain, p) -> bool:
    """True iff ``p`` is strictly interior (points within 1e-12 of the boundary are not)."""
    return d.contains(p)


def near_boundary(d: Domain, p) -> bool:
    return d.locate(p)[1]


def polygon(points: Sequence[Point2]) -> Domain:
    pts = [_pt(p) for p in points]
    return Domain([Segment(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))])


def edge_distance(e1: Edge, e2: Edge, samples: int = 400) -> float:
    """Euclidean distance between two edges (exact for segment pairs)."""
    if isinstance(e1, Segment) and isinstance(e2, Segment):
        if _segments_intersect(e1, e2):
            return 0.0
        return min(e1.distance(e2.a), e1.distance(e2.b), e2.distance(e1.a), e2.distance(e1.b))
    s = np.linspace(0.0, 1.0, samples + 1)
    pts = e1.points(s)
    d = e2.distances(pts)
    k = int(np.argmin(d))
    lo, hi = s[max(0, k - 1)], s[min(samples, k + 1)]
    # golden-section refinement of the sampled minimum
    g = (math.sqrt(5) - 1) / 2
    f = lambda t: e2.distance(e1.point(t))  # noqa: E731
    a, b = lo, hi
    c1, c2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(c1), f(c2)
    for _ in range(80):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - g * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + g * (b - a)
            f2 = f(c2)
    return min(float(d[k]), f1, f2, f(lo), f(hi))


def _segments_intersect(s1: Segment, s2: Segment) -> bool:
    p, r = s1.a, (s1.b[0] - s1.a[0], s1.b[1] - s1.a[1])
    q, t = s2.a, (s2.b[0] - s2.a[0], s2.b[1] - s2.a[1])
    denom = _cross(r, t)
    qp = (q[0] - p[0], q[1] - p[1])
    if denom == 0:
        return False
    u = _cross(qp, t) / denom
    v = _cross(qp, r) / denom
    return 0 <= u <= 1 and 0 <= v <= 1
