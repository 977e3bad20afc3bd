import math

import numpy as np
import pytest

from transport2d import localize as loc
from transport2d import oracles
from transport2d.characteristics import TransportProblem, solve_at
from transport2d.classify import classify_boundary, exceptional_points
from transport2d.expr import ScalarField, VectorField2
from transport2d.geometry import polygon
from conftest import interior_points

S2 = math.sqrt(2) / 2


def decomposition(n):
    ex = oracles.example(n)
    return loc.decompose_gamma_minus(classify_boundary(ex.domain, ex.u, ex.W), ex.domain)


# ------------------------------------------------------------ decomposition

def test_single_piece():
    dec = decomposition(1)
    assert dec.q == 1 and dec.mu0 == math.inf


def test_two_pieces_on_the_small_triangle():
    dec = decomposition(5)
    assert dec.q == 2
    ends = sorted(sum(p.endpoints, ()) for p in dec.pieces)
    # B C and A D: inflow on AB stops at D, so the pieces do not touch
    assert ends[0] == pytest.approx((-11 / 6, 1 / 6, -4 / 3, 1 / 2), abs=1e-12)
    assert ends[1] == pytest.approx((-4 / 3, 2 / 3, -5 / 3, 1 / 3), abs=1e-9)
    assert dec.touching == ()
    assert dec.mu0 == pytest.approx(0.046225016352, abs=1e-9)


def test_opposite_sides():
    sq = polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    u = VectorField2.parse("x - 0.5", "0.5 - y")
    dec = loc.decompose_gamma_minus(classify_boundary(sq, u, 1.0), sq)
    assert dec.q == 2
    assert dec.mu0 == pytest.approx(1.0, abs=1e-12)


def test_empty_inflow_rejected():
    sq = polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    u = VectorField2.parse("0", "0")
    with pytest.raises(loc.LocalizationError):
        loc.decompose_gamma_minus(classify_boundary(sq, u, 1.0), sq)


# ------------------------------------------------------------ cutoffs

def test_profile():
    s = np.linspace(-1, 2, 3001)
    v = loc.psi(s)
    assert np.all(v[s <= 0] == 1) and np.all(v[s >= 1] == 0)
    assert np.all(np.diff(v) <= 0)
    assert loc.psi(np.array(0.5)) == pytest.approx(0.5, abs=1e-15)


def test_theta_plateau_and_support(rng):
    dec = decomposition(3)
    piece = dec.pieces[0]
    mu = 0.2
    th = loc.theta_cutoff(piece, mu)
    pts = rng.uniform([-1, 0], [1, 2], size=(1000, 2))
    edge = oracles.example(3).domain.edges[piece.edge]
    d = edge.distances(pts)
    v = th.array(pts[:, 0], pts[:, 1])
    assert np.all(v[d <= mu / 2] == 1) and np.all(v[d >= mu] == 0)
    assert np.all((v >= 0) & (v <= 1))


def test_lambda_plateau_and_support(local3, rng):
    f = local3.frame
    mu = 1e-3
    lam = loc.lambda_cutoff(f, mu)
    pts = rng.uniform(-0.1, 0.1, size=(1000, 2)) + np.array(f.origin)
    xi, eta = f.to_local(pts[:, 0], pts[:, 1])
    k = loc.k_function(f, xi, eta)
    v = lam.array(pts[:, 0], pts[:, 1])
    assert np.all(v[k <= mu] == 1) and np.all(v[k >= 2 * mu] == 0)
    assert np.all((v >= 0) & (v <= 1))
    assert np.sum(k <= mu) > 0 and np.sum(k >= 2 * mu) > 0


# ------------------------------------------------------------ splitting

def test_split_reconstruction(rng):
    ex = oracles.example(3)
    dec = decomposition(3)
    split = loc.split_rhs(ScalarField.parse("exp(x) + y^2"), dec, 0.15)
    pts = np.array(interior_points(ex.domain, 1000, rng, margin=0.0))
    x, y = pts[:, 0], pts[:, 1]
    total = split.l_mu.array(x, y) + sum(lj.array(x, y) for lj in split.l_j)
    assert np.max(np.abs(total - (np.exp(x) + y ** 2))) <= 1e-12


def test_split_single_piece_plateau():
    dec = decomposition(1)
    split = loc.split_rhs(ScalarField.parse("x^(2/3)"), dec, 0.1)
    (l1,) = split.l_j
    assert l1(0.5, 2.0) == pytest.approx(0.5 ** (2 / 3), abs=1e-15)
    assert split.l_mu(0.5, 2.0) == 0.0
    assert split.l_mu(0.5, 1.5) == pytest.approx(0.5 ** (2 / 3), abs=1e-15)
    assert l1(0.5, 1.5) == 0.0


def test_split_vanishes_on_inflow():
    for n, mu in ((3, 0.1), (5, 0.01)):
        dec = decomposition(n)
        split = loc.split_rhs(ScalarField.parse("1 + x*y"), dec, mu)
        for piece in dec.pieces:
            pts = piece.curve.points(np.linspace(0, 1, 200))
            assert np.max(np.abs(split.l_mu.array(pts[:, 0], pts[:, 1]))) <= 1e-15


def test_split_range_checked():
    dec = decomposition(5)
    with pytest.raises(loc.LocalizationError):
        loc.split_rhs(ScalarField.parse("1"), dec, dec.mu0)
    with pytest.raises(loc.LocalizationError):
        loc.split_rhs(ScalarField.parse("1"), dec, 0.0)


def test_solver_superposition_across_split(rng):
    ex = oracles.example(3)
    dec = decomposition(3)
    split = loc.split_rhs(ex.l, dec, 0.1)
    p = TransportProblem(ex.domain, ex.u, ex.l, ex.W)
    parts = [p.with_rhs(split.l_mu)] + [p.with_rhs(lj) for lj in split.l_j]
    for q in interior_points(ex.domain, 50, rng, ex.singular, 1e-2):
        s = sum(solve_at(pp, q) for pp in parts)
        assert abs(solve_at(p, q) - s) <= 5e-5


# ------------------------------------------------------------ frames

def test_frame_rotation(local3):
    f = local3.frame
    (m,) = local3.E.points
    assert f.rotate(m.normal) == pytest.approx((-1.0, 0.0), abs=1e-14)
    assert f.rotate(m.tau) == pytest.approx((0.0, 1.0), abs=1e-14)
    assert f.u20 == pytest.approx(-S2, abs=1e-14)
    assert f.a > 0
    h = 1e-6
    fd = (f.u1(0, h) - f.u1(0, -h)) / (2 * h)
    assert fd == pytest.approx(f.a, rel=1e-8)


def test_frame_refused_for_positive_tangent():
    ex = oracles.example(5)
    c = classify_boundary(ex.domain, ex.u, ex.W)
    E = exceptional_points(c, ex.domain, ex.u)
    with pytest.raises(loc.LocalizationError, match="tangent"):
        loc.build_local_frame(E.points[0], ex.domain, ex.u, ex.W)


def test_frame_refused_for_double_root():
    ex = oracles.example(4)
    c = classify_boundary(ex.domain, ex.u, ex.W)
    E = exceptional_points(c, ex.domain, ex.u)
    with pytest.raises(loc.LocalizationError, match="double root"):
        loc.build_local_frame(E.points[0], ex.domain, ex.u, ex.W)


def test_reflected_extension(local3):
    f = local3.frame
    ys = -np.linspace(1e-4, 1e-2, 20)
    assert np.all(f.u1_axis(ys) == 0)
    assert np.allclose(f.u2e(0.01, ys), f.u2e(0.01, -ys), rtol=0, atol=0)


# ------------------------------------------------------------ change of variables

def test_change_of_variables_basics(local3):
    f = local3.frame
    assert float(f.X(0.0, 0.0)) == 0.0
    flat = loc.LocalFrame.from_local_fields("0", "-3")
    xs = np.linspace(0, 0.5, 6)
    assert np.allclose(flat.X(xs, 0.2), 3 * xs, rtol=1e-13, atol=0)


def test_jacobian_identities(local3, rng):
    f = local3.frame
    r = local3.k.mu2
    rad = r * np.sqrt(rng.uniform(0.01, 0.9, 200))
    ang = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, 200)
    x, y = rad * np.cos(ang), rad * np.sin(ang)
    h = 1e-6 * r
    x = np.maximum(x, 2 * h)
    Xx = (f.X(x + h, y) - f.X(x - h, y)) / (2 * h)
    Xy = (f.X(x, y + h) - f.X(x, y - h)) / (2 * h)
    assert np.max(np.abs(Xx + f.u2e(x, y))) <= 1e-6
    assert np.max(np.abs(Xy - f.u1e(x, y))) <= 1e-6
    assert np.all(-f.u2e(x, y) > 0)        # the Jacobian of (x, y) -> (X, y)


def test_injectivity(local3):
    assert loc.injectivity_check(local3.frame, local3.k.mu2)


# ------------------------------------------------------------ constants

def test_linear_model_constants():
    a, c = 2.0, 0.5
    f = loc.LocalFrame.from_local_fields(f"{a}*y", f"-{c}", gamma_length=0.3, search_bound=1.0)
    k = loc.compute_constants(f)
    assert k.mu2 == 1.0                   # u2 < 0 everywhere: capped at the bound
    assert k.mu3 == pytest.approx(0.3)    # capped at |gamma|
    assert k.mu4 == pytest.approx(c / a, rel=1e-15)
    assert k.r2 == pytest.approx(k.K * c / 6, rel=1e-15)
    assert k.r_star == pytest.approx(2 * math.sqrt(k.r1 / a), rel=1e-15)
    assert k.r_star <= k.K / (6 * math.sqrt(2)) * (1 + 1e-12)
    assert 0 < k.r1 < k.r2


def test_example_constants(local3):
    k = local3.k
    assert k.mu2 == pytest.approx(0.70711, rel=1e-4)
    assert k.mu3 == pytest.approx(0.35355, rel=1e-4)
    assert k.mu4 == pytest.approx(0.70711, rel=1e-4)
    assert k.mu5 == pytest.approx(0.0024595, rel=1e-3)
    assert k.K == k.mu5
    assert k.r1 == pytest.approx(2.1004e-8, rel=1e-3)
    assert k.r_star == pytest.approx(2.8986e-4, rel=1e-3)
    assert not k.fourth_case


def test_inclusion_chain(local3):
    f, k = local3.frame, local3.k
    for r in (k.r1, k.r2, 0.5 * f.u20 ** 2 / f.a):
        assert loc.inclusion_chain_check(f, r) == (True, True)
    with pytest.raises(loc.PreconditionError):
        loc.inclusion_chain_check(f, 2 * f.u20 ** 2 / f.a)


# ------------------------------------------------------------ local solution

def test_zero_on_inflow_piece(local3):
    f, k = local3.frame, local3.k
    pts = np.column_stack([np.zeros(5), np.linspace(0.1, 0.9, 5) * k.K])
    z = loc.local_solution(f, k, lambda x, y: 1.0 + 0 * x, pts)
    assert np.max(np.abs(z)) <= 1e-9


def test_zero_rhs(local3):
    f, k = local3.frame, local3.k
    assert loc.local_solution(f, k, lambda x, y: 0 * x, (0.3 * k.K, 0.1 * k.K)) == 0.0
    ring = loc.ring_vanish_check(f, k, lambda x, y: 0 * x, k.r1 / 6)
    assert ring.max_abs == 0.0


def test_outside_half_ball(local3):
    f, k = local3.frame, local3.k
    with pytest.raises(loc.LocalizationError):
        loc.local_solution(f, k, lambda x, y: 1.0 + 0 * x, (2 * k.K, 0.0))


def test_local_matches_solver_for_unit_rhs(local3, rng):
    # l = 1 on the whole half ball: compare with the traced solution
    f, k = local3.frame, local3.k
    p = TransportProblem(local3.ex.domain, local3.ex.u, ScalarField.parse("1"), 1.0)
    pts = []
    while len(pts) < 10:
        r, t = k.K * math.sqrt(rng.uniform(0.05, 1)), rng.uniform(-0.5 * math.pi, 0.5 * math.pi)
        q = (r * math.cos(t), r * math.sin(t))
        if f.in_domain(*q)[0]:
            pts.append(q)
    z = loc.local_solution(f, k, lambda x, y: 1.0 + 0 * x, np.array(pts))
    for (xi, eta), zl in zip(pts, z):
        g = f.to_global(xi, eta)
        assert abs(zl - solve_at(p, (float(g[0]), float(g[1])))) <= 1e-7


def _local_rhs(local3, mu):
    split = loc.split_rhs(local3.ex.l, local3.dec, mu)
    return loc.local_rhs(local3.frame, split, local3.j, mu)


def test_ring_precondition(local3):
    k = local3.k
    with pytest.raises(loc.PreconditionError):
        loc.ring_vanish_check(local3.frame, k, _local_rhs(local3, k.r1), k.r1)


def test_extend_by_zero(local3):
    f, k = local3.frame, local3.k
    mu = k.r1 / 6
    lbar = _local_rhs(local3, mu)
    z = loc.extend_by_zero(f, k, lbar, mu)
    far = f.to_global(2 * k.r_star * S2, 2 * k.r_star * S2)
    assert z(float(far[0]), float(far[1])) == 0.0
    xi, eta = 0.2 * k.r_star, 0.3 * k.r_star
    g = f.to_global(xi, eta)
    assert z(float(g[0]), float(g[1])) == loc.local_solution(f, k, lbar, (xi, eta))
    checked = 0
    for t in np.linspace(-0.5 * math.pi, 0.5 * math.pi, 41):
        a = [k.r_star * (1 - 1e-3) * math.cos(t), k.r_star * (1 - 1e-3) * math.sin(t)]
        b = [k.r_star * (1 + 1e-3) * math.cos(t), k.r_star * (1 + 1e-3) * math.sin(t)]
        if not (f.in_domain(*a)[0] and f.in_domain(*b)[0]):
            continue
        ga, gb = f.to_global(*a), f.to_global(*b)
        assert abs(z(float(ga[0]), float(ga[1])) - z(float(gb[0]), float(gb[1]))) <= 1e-6
        checked += 1
    assert checked >= 5


def test_extension_refused_when_ring_fails(local3):
    f, k = local3.frame, local3.k
    bad = loc.RingCheck(1.0, k.r_star, k.r2 / abs(k.u20), 10)
    with pytest.raises(loc.LocalizationError, match="refusing"):
        loc.extend_by_zero(f, k, lambda x, y: 1.0 + 0 * x, k.r1 / 6, ring=bad)
