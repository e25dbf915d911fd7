import numpy as np
import pytest
import sympy as sp

from berwald_lab import pseudo_riemann as pr
from berwald_lab.tensor import SingularMatrixError
from oracles import Geometry

PP = ("u", "v", "x", "y")
rng = np.random.default_rng(11)


def minkowski():
    return pr.MetricSpec(("t", "x", "y", "z"), {(0, 0): -1, (1, 1): 1, (2, 2): 1, (3, 3): 1})


def ppwave(H):
    return pr.MetricSpec(PP, {(0, 0): H, (0, 1): -1, (2, 2): 1, (3, 3): 1})


def test_minkowski_flat():
    conn = pr.christoffel(minkowski())
    pts = rng.uniform(-1, 1, (5, 4))
    assert np.all(conn.gammas(pts) == 0.0)
    assert np.all(pr.ricci_batch(conn, pts) == 0.0)


def test_ppwave_christoffels():
    H = "sin(u)*x^2 + x*y^3"
    conn = pr.christoffel(ppwave(H))
    u, v, x, y = sp.symbols("u v x y")
    Hs = sp.sin(u) * x ** 2 + x * y ** 3
    pts = rng.uniform(-1, 1, (6, 4))
    G = conn.gammas(pts)
    for p, g in zip(pts, G):
        sub = dict(zip((u, v, x, y), p))
        expect = np.zeros((4, 4, 4))
        dH = [float(sp.diff(Hs, s).subs(sub)) for s in (u, v, x, y)]
        expect[1, 0, 0] = -0.5 * dH[0]
        for a in (2, 3):
            expect[1, 0, a] = expect[1, a, 0] = -0.5 * dH[a]
            expect[a, 0, 0] = -0.5 * dH[a]
        assert np.allclose(g, expect, atol=1e-13)


def test_flrw_christoffels():
    metric = pr.MetricSpec(("t", "x", "y", "z"), {(0, 0): 1, (1, 1): "-t^2", (2, 2): "-t^2", (3, 3): "-t^2"})
    g = pr.christoffel(metric).gammas(np.array([[1.7, 0.1, 0.2, 0.3]]))[0]
    assert g[0, 1, 1] == pytest.approx(1.7)
    assert g[1, 0, 1] == pytest.approx(1 / 1.7)


def test_covariant_derivative_examples():
    mink = minkowski()
    b = pr.OneFormSpec(("t", "x", "y", "z"), [1, 0, 0, 0])
    c = pr.covariant_derivative_oneform(pr.christoffel(mink), b, [0.1, 0.2, 0.3, 0.4])
    assert np.all(c.data == 0.0)

    metric = pr.MetricSpec(PP, {(0, 0): "(1 + u*x)*v", (0, 1): -1, (2, 2): 1, (3, 3): 1})
    du = pr.OneFormSpec(PP, [1, 0, 0, 0])
    p = np.array([0.4, -0.3, 0.8, 0.2])
    c = pr.covariant_derivative_oneform(pr.christoffel(metric), du, p).data
    expect = np.zeros((4, 4))
    expect[0, 0] = -0.5 * (1 + p[0] * p[2])
    assert np.allclose(c, expect, atol=1e-14)


def test_covariant_derivative_example1_against_sympy():
    # a(t) = t, m = 1/2, c = 1.3: b = c a^(1/m) dt
    m, c = 0.5, 1.3
    coords = ("t", "x", "y", "z")
    metric = {(0, 0): "1", (1, 1): "-t^2", (2, 2): "-t^2", (3, 3): "-t^2"}
    oneform = {0: f"{c}*t^{1 / m}"}
    geo = Geometry(coords, metric, oneform, m)
    C = geo.nabla_b()
    mine = pr.covariant_derivative_oneform(pr.christoffel(pr.MetricSpec(coords, metric)),
                                           pr.OneFormSpec(coords, oneform), [1.4, 0, 0, 0]).data
    ref = np.array(geo.at(C, [1.4, 0, 0, 0]), dtype=float)
    assert np.allclose(mine, ref, atol=1e-12)
    t = 1.4
    assert mine[0, 0] == pytest.approx(c * (1 / m) * t ** (1 / m - 1))
    assert mine[1, 1] == pytest.approx(-c * t ** (1 / m) * t)


def test_ppwave_ricci():
    harmonic = pr.christoffel(ppwave("x^2 - y^2"))
    pts = rng.uniform(-1, 1, (8, 4))
    assert np.max(np.abs(pr.ricci_batch(harmonic, pts))) < 1e-14
    ric = pr.ricci_batch(pr.christoffel(ppwave("x^2")), pts)
    expect = np.zeros((4, 4))
    expect[0, 0] = -1.0
    assert np.allclose(ric, expect, atol=1e-14)


def test_pointwise_connection_matches_symbolic():
    conn = pr.christoffel(ppwave("sin(u)*x^3 - u*y^2"))
    pts = rng.uniform(-1, 1, (6, 4))
    exact = pr.ricci_batch(conn, pts)
    fd = pr.ricci_batch(conn.pointwise(), pts)
    assert conn.backing == "symbolic" and conn.pointwise().backing == "pointwise"
    assert np.max(np.abs(exact - fd)) < 1e-7


def test_metric_compatibility():
    metric = pr.MetricSpec(PP, {(0, 0): "x*y + v*u", (0, 1): -1, (0, 2): "0.2*u", (2, 2): "1 + 0.1*x^2", (3, 3): 1})
    assert pr.metric_compatibility(metric, rng.uniform(-1, 1, (10, 4))) < 1e-13


def test_norms_and_parallel():
    mink = minkowski()
    dt = pr.OneFormSpec(("t", "x", "y", "z"), [1, 0, 0, 0])
    assert pr.norm_sq(mink, dt, [0, 0, 0, 0]) == -1.0
    assert pr.is_parallel(pr.christoffel(mink), dt, rng.uniform(-1, 1, (4, 4)), 1e-14)
    du = pr.OneFormSpec(PP, [1, 0, 0, 0])
    assert pr.norm_sq(ppwave("x^2*v"), du, [0.1, 0.5, 0.3, 0.2]) == 0.0
    cosmo = pr.MetricSpec(("t", "x", "y", "z"), {(0, 0): 1, (1, 1): "-t^2", (2, 2): "-t^2", (3, 3): "-t^2"})
    b = pr.OneFormSpec(("t", "x", "y", "z"), ["2*t^2", 0, 0, 0], {})
    assert pr.norm_sq(cosmo, b, [1.5, 0, 0, 0]) == pytest.approx(4 * 1.5 ** 4)


def test_asymmetric_components_rejected():
    with pytest.raises(ValueError):
        pr.MetricSpec(("x", "y"), [["1", "x"], ["y", "1"]])
    ok = pr.MetricSpec(("x", "y"), [["1", "x*y"], ["y*x", "1"]])
    assert ok.values([[2.0, 3.0]])[0, 0, 1] == 6.0


def test_singular_metric_detected():
    with pytest.raises(SingularMatrixError):
        pr.check_metric(pr.MetricSpec(("x", "y"), {(0, 0): "x", (1, 1): 1}), [[0.0, 1.0]])


def test_pullback_trivializes_flrw():
    cosmo = pr.MetricSpec(("t", "x", "y", "z"), {(0, 0): "t^-2", (1, 1): -1, (2, 2): -1, (3, 3): -1})
    new = pr.pullback(cosmo, ("T", "x", "y", "z"), {"t": "exp(T)", "x": "x", "y": "y", "z": "z"})
    vals = new.values(rng.uniform(-1, 1, (5, 4)))
    assert np.allclose(vals, np.diag([1.0, -1.0, -1.0, -1.0]), atol=1e-14)


def test_signature():
    assert pr.signature(np.diag([-1.0, 1, 1, 1])) == (1, 3)
    assert pr.is_lorentzian(np.diag([1.0, -1, -1, -1]))
    assert not pr.is_lorentzian(np.eye(4))
