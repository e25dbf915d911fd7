import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from berwald_lab import catalog, finsler as fs, mkropina as mk, pseudo_riemann as pr, specfile
from oracles import Geometry

rng = np.random.default_rng(21)
BERWALD = [e.name for e in catalog.entries() if e.expected["is_berwald"]]


def points_in(entry, count=6, seed=0):
    lo, hi = np.array(entry.box).T
    return np.random.default_rng(seed).uniform(lo, hi, (count, len(lo)))


def counterexample(rho, m):
    metric = pr.MetricSpec(("u", "v", "x", "y"), {(0, 0): f"({rho})*v", (0, 1): -1, (2, 2): 1, (3, 3): 1})
    return fs.MKropinaSpec(metric, pr.OneFormSpec(("u", "v", "x", "y"), [1, 0, 0, 0]), m)


def test_flat_constant_form_has_zero_f():
    entry = catalog.get("flat-constant")
    sol = mk.solve_f(entry.spec, [0.2, 0.1, -0.3, 0.5])
    assert sol.is_berwald and sol.residual == 0.0
    assert np.all(sol.f.data == 0.0)
    assert mk.delta_gamma(entry.spec, np.zeros(4), [0, 0, 0, 0]).allclose(0.0)


@pytest.mark.parametrize("name", catalog.names())
def test_f_matches_sympy(name, geometry):
    entry = catalog.get(name)
    geo = geometry(name)
    f_sym = geo.solve_f()
    pts = points_in(entry)
    mine = mk.f_batch(entry.spec, pts)
    for p, fm in zip(pts, mine):
        ref = np.array([float(geo.at(fk, p)) for fk in f_sym])
        assert np.allclose(fm, ref, atol=1e-9)


@pytest.mark.parametrize("name", BERWALD)
def test_affine_connection_and_ricci_match_sympy(name, geometry):
    entry = catalog.get(name)
    geo = geometry(name)
    G = geo.affine_gamma(geo.solve_f())
    R = geo.ricci(G)
    pts = points_in(entry, 4, seed=1)
    k = mk._kernel(entry.spec, pts, 2)
    ric = pr.ricci_from_riemann(pr.riemann_from_jet(k.gamma, k.dgamma))
    n = entry.spec.n
    for b, p in enumerate(pts):
        gref = np.array([[[float(geo.at(G[l][i][j], p)) for j in range(n)] for i in range(n)] for l in range(n)])
        assert np.allclose(k.gamma[b], gref, atol=1e-9)
        assert np.allclose(ric[b], np.array(geo.at(R, p), dtype=float), atol=1e-8)


def test_example1_f_and_residual():
    entry = catalog.get("cosmological")
    pts = points_in(entry, 10)
    sol = [mk.solve_f(entry.spec, p) for p in pts]
    for p, s in zip(pts, sol):
        assert s.residual <= 1e-9 and not s.null_branch
        assert np.allclose(s.f.data, [2.0 / p[0], 0, 0, 0], atol=1e-12)  # a′/(m a) with a = t, m = ½
    assert np.allclose(mk.closed_form_f(entry.spec, pts), mk.f_batch(entry.spec, pts), atol=1e-12)


@pytest.mark.parametrize("m", [0.5, 0.3, -0.7, 2.0])
def test_counterexample_f(m):
    spec = counterexample("x^3 + u*x", m)
    pts = rng.uniform(-1, 1, (8, 4))
    for p in pts:
        s = mk.solve_f(spec, p)
        rho = p[2] ** 3 + p[0] * p[2]
        assert s.null_branch and s.residual <= 1e-9
        assert np.allclose(s.f.data, [-rho / (2 * (1 - m)), 0, 0, 0], atol=1e-12)


def test_counterexample_f_oracle_componentwise():
    geo = Geometry(("u", "v", "x", "y"), {(0, 0): "x^3*v", (0, 1): "-1", (2, 2): "1", (3, 3): "1"}, {0: "1"}, 0.5)
    C = geo.nabla_b()
    u, v, x, y = geo.x
    assert sp.simplify(C[0, 0] + x ** 3 / 2) == 0
    assert all(C[i, j] == 0 for i in range(4) for j in range(4) if (i, j) != (0, 0))
    assert geo.solve_f() == [-x ** 3, 0, 0, 0]


@pytest.mark.parametrize("name", BERWALD)
def test_solution_is_unique(name):
    entry = catalog.get(name)
    pts = points_in(entry, 20, seed=2)
    k = mk._kernel(entry.spec, pts, 1)
    M = mk._system(entry.spec.m, k.a, k.b, k.bu)
    sv = np.linalg.svd(M, compute_uv=False)
    assert np.all(sv[:, -1] > 1e-3 * sv[:, 0])


@settings(max_examples=40, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-1, 1)), arrays(float, 4, elements=st.floats(-3, 3)),
       st.floats(-2, 2).filter(lambda m: abs(m) > 0.05))
def test_trace_identity(mat, f, m):
    a = mat @ mat.T + np.diag([-3.0, 3.0, 3.0, 3.0])
    if abs(np.linalg.det(a)) < 1e-3:
        return
    spec = fs.MKropinaSpec(pr.MetricSpec(("t", "x", "y", "z"), a.tolist()),
                           pr.OneFormSpec(("t", "x", "y", "z"), [1, 0, 0, 0]), m)
    dg = mk.delta_gamma(spec, f, [0, 0, 0, 0]).data
    assert np.allclose(np.einsum("kkj->j", dg), -m * 4 * f, atol=1e-9)


def test_example1_trace_instance():
    spec = catalog.get("cosmological").spec
    dg = mk.delta_gamma(spec, [2.0, 0, 0, 0], [1.0, 0, 0, 0]).data
    assert np.einsum("kkj->j", dg)[0] == pytest.approx(-2 * 2.0)


def test_counterexample_connection_matches_fit():
    entry = catalog.get("rho-x-nonmetrizable")
    spec = entry.spec
    x = np.array([0.1, -0.4, 0.6, 0.3])
    X, Y = fs.sample_tangent_points(spec, [(v - 1e-9, v + 1e-9) for v in x], 12, np.random.default_rng(3))
    fit = fs.berwald_detect(spec, X[0], Y)
    assert np.max(np.abs(fit.gamma.data - mk._kernel(spec, X[:1], 1).gamma[0])) < 1e-5


def test_counterexample_skew_ricci_sign():
    spec = catalog.get("rho-x-nonmetrizable").spec
    pts = rng.uniform(-1, 1, (10, 4))
    ric = mk.affine_ricci_batch(spec, pts)
    skew = 0.5 * (ric - np.swapaxes(ric, 1, 2))
    assert np.allclose(skew[:, 2, 0], 3 * pts[:, 2] ** 2, atol=1e-10)  # R̄_[xu] = +3x²
    df = mk.fd_df(spec, pts)
    assert np.max(mk.lemma2_residual(spec, ric, df)) < 1e-6


@pytest.mark.parametrize("name", BERWALD)
def test_lemma2_identity(name):
    entry = catalog.get(name)
    res = mk.affine_ricci(entry.spec, points_in(entry, 30, seed=4))
    assert res["lemma2_residual"] < 1e-6


def test_ppwave_harmonic_affinely_flat():
    res = mk.affine_ricci(catalog.get("ppwave-harmonic").spec, rng.uniform(-1, 1, (20, 4)))
    assert np.max(np.abs(res["ricci"])) < 1e-12


@pytest.mark.parametrize("entry", catalog.entries(), ids=lambda e: e.name)
def test_catalog_verdicts(entry, report_of):
    r = report_of(entry.name)
    exp = entry.expected
    assert r.verdict.is_berwald == exp["is_berwald"]
    assert r.verdict.locally_metrizable == exp["locally_metrizable"]
    assert r.verdict.globally_metrizable == exp["globally_metrizable"]
    assert r.ricci_flat == exp["ricci_flat"]
    assert r.affinely_ricci_flat == exp["affinely_ricci_flat"]
    assert r.classification.tag == exp["classification_tag"]
    assert r.verdict.paths_agree


def test_counterexample_report(report_of):
    v = report_of("rho-x-nonmetrizable").verdict
    assert v.skew_ricci_max == pytest.approx(3.0, rel=1e-9)  # 3x² at the box corner |x| = 1
    assert v.df_max >= 0.1
    with pytest.raises(ValueError):
        mk.construct_metrization(catalog.get("rho-x-nonmetrizable").spec, v)


def test_example1_metrization():
    spec = catalog.get("cosmological").spec
    metr = mk.construct_metrization(spec, base_point=[1.5, 0, 0, 0])
    assert metr.branch == "closed-form"
    pts = np.column_stack([np.linspace(1, 2, 7), np.zeros((7, 3))])
    assert np.allclose(metr.psi_values(pts), np.log(pts[:, 0] ** 2), atol=1e-13)
    a_t = metr.a_tilde.values(pts)
    assert np.allclose(a_t, spec.metric.values(pts) / pts[:, 0, None, None] ** 2, atol=1e-13)
    # ã in T = ln t is constant
    new = pr.pullback(metr.a_tilde, ("T", "x", "y", "z"), {"t": "exp(T)", "x": "x", "y": "y", "z": "z"})
    assert np.allclose(new.values(rng.uniform(0, 0.69, (5, 4))), np.diag([1.0, -1, -1, -1]), atol=1e-12)


def test_parallel_form_gives_constant_psi():
    spec = catalog.get("flat-constant").spec
    metr = mk.construct_metrization(spec, base_point=[0, 0, 0, 0])
    pts = rng.uniform(-1, 1, (5, 4))
    psi = metr.psi_values(pts)
    assert np.ptp(psi) == 0.0
    eta = np.diag([-1.0, 1, 1, 1])
    a_t = metr.a_tilde.values(pts)
    assert np.allclose(a_t, a_t[0, 1, 1] * eta[None], atol=1e-14)


def test_rho_u_metrization_formula(report_of):
    r = report_of("rho-u-metrizable")
    metr = r.metrization
    assert metr.branch == "poincare"
    pts = rng.uniform(-1, 1, (6, 4))
    u = pts[:, 0]
    # ã = exp((m/(1−m)) ∫₀ᵘ ρ) a with ρ = 1 + u², m = ½, base point u = 0
    expect = np.exp(u + u ** 3 / 3)[:, None, None] * r.spec.metric.values(pts)
    assert np.allclose(metr.a_tilde.values(pts), expect, rtol=1e-9)
    c = r.metrization_checks
    assert c.value_identity <= 1e-9 and c.b_parallel <= 1e-6 and c.christoffel_match <= 1e-6


def test_prop4_recovers_undressed_metric(report_of):
    r = report_of("prop4-dressed")
    pts = rng.uniform(-1, 1, (6, 4))
    undressed = r.spec.metric.values(pts) * np.exp(-pts[:, 0] ** 2)[:, None, None]
    assert np.allclose(r.metrization.a_tilde.values(pts), undressed, rtol=1e-9, atol=1e-12)


def test_metrization_needs_branch_information():
    with pytest.raises(ValueError):
        mk.construct_metrization(catalog.get("cosmological").spec)


def test_ppwave_classification(report_of):
    c = report_of("ppwave-harmonic").classification
    assert c.tag == mk.PP_WAVE and c.harmonicity_residual <= 1e-9


def test_example1_flat_after_metrization(report_of):
    c = report_of("cosmological").classification
    assert c.tag == mk.FLAT_CONSTANT and c.metrized_riemann_max <= 1e-8


def test_unsupported_classification_for_three_dimensions():
    sf = specfile.parse_spec("""
[space]
dim = 3
coords = t x y
m = 0.5
[metric]
1 1 = -1
2 2 = 1
3 3 = 1
[oneform]
1 = 1
[analysis]
box = t:-1,1 x:-1,1 y:-1,1
""")
    r = mk.analyze(sf.to_mkropina(), sf.options())
    assert r.verdict.locally_metrizable and r.verdict.globally_metrizable == mk.YES
    assert not r.classification.supported and "n = 4" in r.classification.reason


def test_mixed_causal_character_is_labelled():
    a = np.tile(np.diag([-1.0, 1, 1]), (3, 1, 1))
    labels = mk.causal_labels(a, np.array([-1.0, 0.0, 2.0]), np.array([False, True, False]))
    assert labels == ["timelike", "null", "spacelike"]


def test_grid_rules():
    g = mk.grid_points([(0, 1)] * 3, 5)
    assert g.shape == (125, 3) and g.min() == 0.0 and g.max() == 1.0
    g5 = mk.grid_points([(0, 1)] * 5, 3, seed=1)
    assert g5.shape == (81, 5)
    assert np.array_equal(g5, mk.grid_points([(0, 1)] * 5, 3, seed=1))


def test_threads_do_not_change_results():
    entry = catalog.get("rho-x-nonmetrizable")
    opts = entry.options(threads=1)
    opts.grid = 4
    r1 = mk.analyze(entry.spec, opts)
    opts.threads = 4
    r4 = mk.analyze(entry.spec, opts)
    assert r1.verdict.df_max == r4.verdict.df_max
    assert r1.verdict.skew_ricci_max == r4.verdict.skew_ricci_max
