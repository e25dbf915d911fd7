import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from berwald_lab import catalog, finsler as fs, mkropina as mk, pseudo_riemann as pr

MINK = ("t", "x", "y", "z")


def flat_spec(m=1.0, b=(1.0, 0.0, 0.0, 0.0), extra=None):
    metric = pr.MetricSpec(MINK, {(0, 0): -1, (1, 1): 1, (2, 2): 1, (3, 3): 1})
    comps = list(b)
    if extra:
        comps = [c if i not in extra else extra[i] for i, c in enumerate(comps)]
    return fs.MKropinaSpec(metric, pr.OneFormSpec(MINK, comps), m)


def berwald_entries():
    return [e for e in catalog.entries() if e.expected["is_berwald"]]


def test_kropina_value():
    spec = flat_spec(m=1.0)
    assert fs.F_value(spec, fs.TangentPoint([0, 0, 0, 0], [1, 0, 0, 0])) == 1.0


def test_spec_rejects_low_dimension_and_m_zero():
    metric = pr.MetricSpec(("x", "y"), {(0, 0): 1, (1, 1): 1})
    with pytest.raises(ValueError):
        fs.MKropinaSpec(metric, pr.OneFormSpec(("x", "y"), [1, 0]), 0.5)
    with pytest.raises(ValueError):
        flat_spec(m=0.0)


def test_inadmissible_directions():
    spec = flat_spec(m=0.5)
    with pytest.raises(fs.InadmissibleError):
        fs.F_value(spec, fs.TangentPoint([0, 0, 0, 0], [1, 1, 0, 0]))  # null for η
    with pytest.raises(fs.InadmissibleError):
        fs.F_value(spec, fs.TangentPoint([0, 0, 0, 0], [-1, 0.2, 0, 0]))  # β < 0


@pytest.mark.parametrize("entry", berwald_entries(), ids=lambda e: e.name)
def test_fundamental_tensor_euler(entry):
    spec = entry.spec
    X, Y = fs.sample_tangent_points(spec, entry.box, 100, np.random.default_rng(3))
    g = fs.fundamental_tensor_batch(spec, X, Y)
    F = fs.F_values(spec, X, Y)
    assert np.allclose(np.einsum("bij,bi,bj->b", g, Y, Y), F ** 2, rtol=1e-10)
    assert np.all(np.abs(np.linalg.det(g)) > 0)


def test_flat_parallel_b_nonsingular_and_trivial():
    spec = flat_spec(m=0.5, b=(1.0, 0.3, 0.0, 0.0))
    rng = np.random.default_rng(4)
    X, Y = fs.sample_tangent_points(spec, [(-1, 1)] * 4, 30, rng)
    g = fs.fundamental_tensor_batch(spec, X, Y)
    assert np.min(np.abs(np.linalg.det(g))) > 1e-8
    assert np.ptp(g[:, 0, 0]) > 1e-3  # y-dependent
    assert np.all(fs.nonlinear_connection_batch(spec, X, Y) == 0.0)
    ric, R = fs.finsler_ricci_batch(spec, X[:5], Y[:5])
    assert np.all(ric == 0.0) and np.all(R == 0.0)
    fit = fs.berwald_detect(spec, X[0], Y[:12])
    assert fit.is_berwald and np.all(fit.gamma.data == 0.0)


@pytest.mark.parametrize("entry", berwald_entries(), ids=lambda e: e.name)
def test_connection_is_linear_in_y(entry):
    spec = entry.spec
    X, Y = fs.sample_tangent_points(spec, entry.box, 20, np.random.default_rng(5))
    N = fs.nonlinear_connection_batch(spec, X, Y)
    gamma = mk._kernel(spec, X, 1).gamma
    assert np.max(np.abs(N - np.einsum("bkij,bj->bki", gamma, Y))) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([e.name for e in berwald_entries()]), st.floats(0.1, 10.0), st.integers(0, 2 ** 16))
def test_homogeneity(name, lam, seed):
    entry = catalog.get(name)
    spec = entry.spec
    X, Y = fs.sample_tangent_points(spec, entry.box, 3, np.random.default_rng(seed))
    F1, F2 = fs.F_values(spec, X, Y), fs.F_values(spec, X, lam * Y)
    assert np.allclose(F2, lam * F1, rtol=1e-12)
    N1, N2 = fs.nonlinear_connection_batch(spec, X, Y), fs.nonlinear_connection_batch(spec, X, lam * Y)
    assert np.max(np.abs(N2 - lam * N1)) <= 1e-9 * max(1.0, np.max(np.abs(lam * N1)))


def test_berwald_detect_counterexample():
    spec = catalog.get("rho-x-nonmetrizable").spec
    x = np.array([0.3, 0.4, 0.7, -0.2])
    rng = np.random.default_rng(6)
    X, Y = fs.sample_tangent_points(spec, [(v - 1e-9, v + 1e-9) for v in x], 12, rng)
    fit = fs.berwald_detect(spec, X[0], Y)
    assert fit.is_berwald
    f = np.array([-x[2] ** 3, 0.0, 0.0, 0.0])  # f = −ρ/(2(1−m)) du
    expect = mk.delta_gamma(spec, f, X[0]).data + pr.christoffel(spec.metric).gammas(X[:1])[0]
    assert np.max(np.abs(fit.gamma.data - expect)) < 1e-6


def test_berwald_detect_rejects_perturbation():
    spec = flat_spec(m=0.5, b=(1.0, 0.0, 0.0, 0.0), extra={1: "0.1*x"})
    X, Y = fs.sample_tangent_points(spec, [(0.4, 0.6)] * 4, 12, np.random.default_rng(7))
    fit = fs.berwald_detect(spec, X[0], Y)
    assert not fit.is_berwald
    assert fit.residual > 1e-4


def test_exact_vertical_jet_matches_differences():
    entry = catalog.get("rho-u-metrizable")
    spec = entry.spec
    X, Y = fs.sample_tangent_points(spec, entry.box, 4, np.random.default_rng(8))
    eps = fs.check_admissible(spec, X, Y)
    for k in range(len(X)):
        lag = spec.lagrangian(int(eps[k]))
        jet = lag.connection_jet(X[k:k + 1], Y[k:k + 1])[0]
        h = 1e-5 * np.linalg.norm(Y[k])
        for l in range(4):
            e = np.zeros(4)
            e[l] = h
            fd = (lag.connection(X[k:k + 1], Y[k:k + 1] + e) - lag.connection(X[k:k + 1], Y[k:k + 1] - e))[0] / (2 * h)
            assert np.max(np.abs(jet[1 + l] - fd)) < 1e-7


def test_ppwave_harmonic_ricci_vanishes():
    entry = catalog.get("ppwave-harmonic")
    X, Y = fs.sample_tangent_points(entry.spec, entry.box, 10, np.random.default_rng(9))
    ric, R = fs.finsler_ricci_batch(entry.spec, X, Y)
    assert np.max(np.abs(ric)) < 1e-8
    assert np.max(np.abs(R)) < 1e-6


@pytest.mark.parametrize("name", ["rho-u-metrizable", "rho-x-nonmetrizable", "prop4-dressed"])
def test_ricci_is_symmetrized_affine_ricci(name):
    entry = catalog.get(name)
    spec = entry.spec
    X, Y = fs.sample_tangent_points(spec, entry.box, 8, np.random.default_rng(10))
    rbar = mk.affine_ricci_batch(spec, X)
    sym = 0.5 * (rbar + np.swapaxes(rbar, 1, 2))
    ric, R = fs.finsler_ricci_batch(spec, X, Y)
    assert np.max(np.abs(R - sym)) < 1e-5
    assert np.allclose(ric, np.einsum("bij,bi,bj->b", R, Y, Y), rtol=1e-6, atol=1e-8)


def test_sampler_respects_cone_and_conditioning():
    entry = catalog.get("cosmological")
    spec = entry.spec
    X, Y = fs.sample_tangent_points(spec, entry.box, 40, np.random.default_rng(12))
    assert X.shape == Y.shape == (40, 4)
    lo, hi = np.array(entry.box).T
    assert np.all((X >= lo) & (X <= hi))
    beta = np.einsum("bi,bi->b", spec.oneform.values(X), Y)
    assert np.all(beta > 0)
