import numpy as np
import pytest

import hardylab as hl


@pytest.fixture(scope="session")
def eu3():
    geo = hl.make_geometry("euclidean", m=3)
    w = hl.make_weight(geo, "euclid-norm")
    grid = hl.default_grid(geo, w, bounds=[(-2, 2)] * 3, n=32)
    return geo, w, grid


@pytest.fixture(scope="session")
def eu2():
    geo = hl.make_geometry("euclidean", m=2)
    w = hl.make_weight(geo, "euclid-norm")
    grid = hl.default_grid(geo, w, bounds=[(-4, 4)] * 2, n=200)
    return geo, w, grid


@pytest.fixture(scope="session")
def h1():
    geo = hl.make_geometry("heisenberg", m=1)
    w = hl.make_weight(geo, "koranyi-gauge")
    grid = hl.default_grid(geo, w, bounds=[(-2, 2)] * 3, n=32)
    return geo, w, grid


@pytest.fixture(scope="session")
def hyp3():
    geo = hl.make_geometry("hyperbolic", m=3)
    w = hl.make_weight(geo, "hyperbolic-height")
    grid = hl.default_grid(geo, w, bounds=[(-1, 1), (-1, 1), (0.5, 2.5)], n=32)
    return geo, w, grid


@pytest.fixture(scope="session")
def gru1():
    geo = hl.make_geometry("grushin", n=1)
    w = hl.make_weight(geo, "grushin-gauge")
    grid = hl.default_grid(geo, w, bounds=[(-2, 2)] * 2, n=200)
    return geo, w, grid


@pytest.fixture(scope="session")
def radial3():
    geo = hl.make_geometry("euclidean-radial", m=3)
    w = hl.make_weight(geo, "euclid-norm")
    grid = hl.make_grid(geo, [(0.2, 6.0)], n=512)
    return geo, w, grid


def sample_points(rng, n, bounds, min_radius=0.3, indices=None):
    """Random points in a box, bounded away from the coordinate origin of the
    selected index subset (where catalog weights are singular)."""
    m = len(bounds)
    pts = np.empty((n, m))
    got = 0
    while got < n:
        cand = np.stack([rng.uniform(lo, hi, size=2 * n) for lo, hi in bounds], axis=1)
        sel = cand if indices is None else cand[:, list(indices)]
        ok = np.sqrt(np.sum(sel ** 2, axis=1)) > min_radius
        take = cand[ok][: n - got]
        pts[got:got + len(take)] = take
        got += len(take)
    return pts
