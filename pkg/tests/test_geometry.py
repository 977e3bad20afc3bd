import math

import numpy as np
import pytest

from transport2d import oracles
from transport2d.geometry import (Arc, Domain, GeometryError, Segment, distance_to_edge, inside,
                                  near_boundary, outward_normal, polygon,
                                  tangent_toward_gamma_minus)

S2 = math.sqrt(2) / 2


def square():
    return polygon([(0, 1), (1, 1), (1, 2), (0, 2)])


def test_normals():
    top = square().edges[2]
    assert outward_normal(top, 0.5) == pytest.approx((0.0, 1.0), abs=1e-15)
    ac = oracles.example(3).domain.edges[2]
    assert outward_normal(ac, 0.3) == pytest.approx((-S2, S2), abs=1e-15)
    u = oracles.example(3).u
    n = outward_normal(ac, 1.0)
    ux, uy = u(-0.5, 0.5)
    assert ux * n[0] + uy * n[1] == pytest.approx(0.0, abs=1e-15)
    circle = oracles.example(6).domain.edges[0]
    for s in np.linspace(0, 1, 7):
        t = circle.angle(s)
        assert outward_normal(circle, s) == pytest.approx((math.cos(t), math.sin(t)), abs=1e-14)


def test_tangent_toward_inflow():
    ac = oracles.example(3).domain.edges[2]
    assert tangent_toward_gamma_minus((-0.5, 0.5), ac) == pytest.approx((S2, S2), abs=1e-15)
    ab = oracles.example(5).domain.edges[0]
    d_pt = (-5 / 3, 1 / 3)
    g1 = Segment(ab.point(0.0), d_pt)      # the inflow part of AB ends at D
    t = tangent_toward_gamma_minus(d_pt, g1)
    assert t == pytest.approx((S2, S2), abs=1e-14)
    assert tangent_toward_gamma_minus((0, 2), Segment((1, 2), (0, 2))) == pytest.approx((1, 0))
    with pytest.raises(GeometryError):
        tangent_toward_gamma_minus((0.5, 2), Segment((1, 2), (0, 2)))


def test_inside():
    assert inside(square(), (0.5, 1.5))
    assert inside(oracles.example(3).domain, (0.25, 0.6))
    assert not inside(oracles.example(4).domain, (-1, 0.9))
    assert not inside(square(), (0.5, 2.0))
    assert near_boundary(square(), (0.5, 2.0 + 1e-13))


def test_distances():
    assert distance_to_edge((0, 0), Segment((1, 0), (1, 1))) == 1
    assert distance_to_edge((0.5, 2.5), Segment((1, 2), (0, 2))) == 0.5
    half = Arc((0, 1), 0.5, 0.0, math.pi)
    assert distance_to_edge((2, 1), half) == pytest.approx(1.5, abs=1e-15)
    assert distance_to_edge((0, 0), half) == pytest.approx(math.hypot(0.5, 1), abs=1e-15)


@pytest.mark.parametrize("n", range(1, 8))
def test_frames_are_orthonormal(n):
    for e in oracles.example(n).domain.edges:
        for s in np.linspace(0, 1, 50):
            nx, ny = e.normal(s)
            tx, ty = e.tangent(s)
            assert abs(nx * tx + ny * ty) <= 1e-14
            assert abs(math.hypot(nx, ny) - 1) <= 1e-14
            assert abs(math.hypot(tx, ty) - 1) <= 1e-14


def ray_cast(poly, pts):
    # even-odd rule against a fine polyline, vectorized over points
    a, b = poly, np.roll(poly, -1, axis=0)
    x, y = pts[:, :1], pts[:, 1:]
    straddle = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return (np.sum(straddle & (x < xc), axis=1) % 2) == 1


@pytest.mark.parametrize("n", range(1, 8))
def test_inside_agrees_with_ray_casting(n, rng):
    d = oracles.example(n).domain
    poly = []
    for e in d.edges:
        k = 2 if isinstance(e, Segment) else 4000
        poly.extend(e.points(np.linspace(0, 1, k))[:-1])
    x0, y0, x1, y1 = d.bbox
    pts = rng.uniform([x0 - 0.1, y0 - 0.1], [x1 + 0.1, y1 + 0.1], size=(1000, 2))
    pts = pts[d.distances(pts) >= 1e-6]
    expected = ray_cast(np.array(poly), pts)
    assert [inside(d, p) for p in pts] == list(expected)


def test_vertex_angles():
    sq = square()
    assert all(v.inner_angle == pytest.approx(math.pi / 2) for v in sq.vertices)
    tri = oracles.example(3).domain
    assert sum(v.inner_angle for v in tri.vertices) == pytest.approx(math.pi)
    stadium = oracles.example(7).domain
    assert all(v.inner_angle == pytest.approx(math.pi, abs=1e-12) for v in stadium.vertices)


def test_full_circle_is_a_closed_chain():
    d = Domain([Arc((0, 1), 0.5, -math.pi, math.pi)])
    assert inside(d, (0, 1))
    assert not inside(d, (0, 1.6))


def test_open_chain_rejected():
    with pytest.raises(GeometryError):
        Domain([Segment((0, 0), (1, 0)), Segment((1, 0), (1, 1))])


def test_zero_length_edge_rejected():
    with pytest.raises(GeometryError):
        Segment((0, 0), (0, 0))
