import numpy as np
import pytest

from transport2d import oracles


@pytest.fixture(scope="session")
def examples():
    return {n: oracles.example(n) for n in range(1, 8)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def interior_points(domain, n, rng, keep_away=(), margin=1e-3, extra=None):
    """n random points strictly inside ``domain``, away from ``keep_away``."""
    x0, y0, x1, y1 = domain.bbox
    out = []
    while len(out) < n:
        p = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
        if not domain.contains(p) or domain.distance(p) < margin:
            continue
        if any(np.hypot(p[0] - s[0], p[1] - s[1]) < margin for s in keep_away):
            continue
        if extra is not None and not extra(p):
            continue
        out.append(p)
    return out


class Local:
    """Example 3's exceptional point A with its frame and constants."""

    def __init__(self):
        from transport2d import localize as loc
        from transport2d.classify import classify_boundary, exceptional_points
        self.ex = ex = oracles.example(3)
        self.c = classify_boundary(ex.domain, ex.u, ex.W)
        self.E = exceptional_points(self.c, ex.domain, ex.u)
        self.dec = loc.decompose_gamma_minus(self.c, ex.domain)
        ((self.j, self.frame),) = loc.frames_for(self.E.points, self.dec, ex.domain, ex.u, ex.W)
        self.k = loc.compute_constants(self.frame)


@pytest.fixture(scope="session")
def local3():
    return Local()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
