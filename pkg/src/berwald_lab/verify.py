"""Built-in verification suites run by ``berwald-lab verify``.

Each suite returns a :class:`SuiteResult` holding individual checks.  A
check compares an observed residual against a tolerance (or a boolean
against its expected value); ``tol_override`` replaces every residual
tolerance, which is how the tolerance floor of each suite is probed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import catalog
from . import expr as ex
from . import finsler as fs
from . import mkropina as mk
from . import pseudo_riemann as pr
from .finsler import MKropinaSpec

LAMBDAS = (0.5, 2.0, 7.0)


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    tol: float | None = None
    detail: str = ""


@dataclass
class SuiteResult:
    name: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_residual(self) -> float | None:
        vals = [c.value for c in self.checks if c.value is not None and c.tol is not None]
        return max(vals) if vals else None

    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if not c.passed), None)


class Context:
    """Shared state across suites: one analysis per catalog entry."""

    def __init__(self, tol_override: float | None = None, seed: int = 0, threads: int = 1):
        self.tol_override = tol_override
        self.seed = seed
        self.threads = threads
        self._reports: dict[str, mk.AnalysisReport] = {}

    def tol(self, default: float) -> float:
        return default if self.tol_override is None else self.tol_override

    def report(self, name: str) -> mk.AnalysisReport:
        if name not in self._reports:
            entry = catalog.get(name)
            self._reports[name] = mk.analyze(entry.spec, entry.options(self.threads))
        return self._reports[name]

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def residual(self, name: str, value: float, default_tol: float, detail: str = "") -> Check:
        tol = self.tol(default_tol)
        value = float(value)
        return Check(name, bool(value <= tol), value, tol, detail)


def _berwald_entries():
    return [e for e in catalog.entries() if e.expected["is_berwald"]]


def _metrizable_entries():
    return [e for e in catalog.entries() if e.expected["locally_metrizable"]]


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def lemma1_residuals(spec: MKropinaSpec, box, count: int, rng) -> tuple[float, float]:
    """max |R_ij − sym(R̄)_ij| and max |Ric − R_ij y^i y^j| at random tangent points."""
    X, Y = fs.sample_tangent_points(spec, box, count, rng)
    ric, R = fs.finsler_ricci_batch(spec, X, Y)
    rbar = mk.affine_ricci_batch(spec, X)
    sym = 0.5 * (rbar + np.swapaxes(rbar, 1, 2))
    euler = np.abs(ric - np.einsum("bij,bi,bj->b", R, Y, Y))
    return float(np.max(np.abs(R - sym))), float(np.max(euler))


def suite_lemma1(ctx: Context) -> SuiteResult:
    res = SuiteResult("lemma1")
    for i, e in enumerate(_berwald_entries()):
        diff, _ = lemma1_residuals(e.spec, e.box, 20, ctx.rng(100 + i))
        res.checks.append(ctx.residual(f"{e.name}: R_ij = sym(affine Ricci)", diff, 1e-5))
    return res


def suite_lemma2(ctx: Context) -> SuiteResult:
    res = SuiteResult("lemma2")
    for e in _berwald_entries():
        r = ctx.report(e.name)
        res.checks.append(ctx.residual(f"{e.name}: skew Ricci identity on the grid",
                                       r.verdict.lemma2_residual, 1e-5,
                                       f"skew max {r.verdict.skew_ricci_max:.3e}"))
    return res


def suite_theorem1(ctx: Context) -> SuiteResult:
    res = SuiteResult("theorem1")
    for e in catalog.entries():
        r = ctx.report(e.name)
        v = r.verdict
        if not v.is_berwald:
            continue
        tol = e.options().tol_metrizable
        res.checks.append(Check(f"{e.name}: (df ≤ tol) ⇔ (skew ≤ tol)",
                                (v.df_max <= tol) == (v.skew_ricci_max <= tol)))
    for e in _metrizable_entries():
        r = ctx.report(e.name)
        chk = r.metrization_checks
        if chk is None:
            res.checks.append(Check(f"{e.name}: metrization constructed", False, detail="no metrization"))
            continue
        res.checks.append(ctx.residual(f"{e.name}: F = α̃^(1+m) β̃^(−m)", chk.value_identity, 1e-9))
        res.checks.append(ctx.residual(f"{e.name}: ∇̃ b̃ = 0", chk.b_parallel, 1e-6))
        res.checks.append(ctx.residual(f"{e.name}: Christoffel(ã) = affine Γ", chk.christoffel_match, 1e-6))
        # constant rescaling of ã leaves the Christoffel symbols unchanged
        pts = r.points[:: max(1, len(r.points) // 16)]
        g0 = pr.christoffel(r.metrization.a_tilde).gammas(pts)
        scaled = pr.PointwiseMetric(e.spec.n, lambda p, a=r.metrization.a_tilde: 3.7 * a.values(p),
                                    coords=e.spec.coords)
        g1 = pr.christoffel(scaled).gammas(pts)
        res.checks.append(ctx.residual(f"{e.name}: gauge ã → λã", np.max(np.abs(g1 - g0)), 1e-6))
    return res


def suite_counterexample(ctx: Context) -> SuiteResult:
    res = SuiteResult("counterexample")
    r = ctx.report("rho-x-nonmetrizable")
    v = r.verdict
    res.checks.append(ctx.residual("Berwald residual", v.berwald_residual, 1e-8))
    res.checks.append(Check("not locally metrizable", v.locally_metrizable is False))
    res.checks.append(Check("skew_ricci_max ≥ 0.1", v.skew_ricci_max >= 0.1, v.skew_ricci_max))
    res.checks.append(Check("df and skew paths agree", bool(v.paths_agree)))
    return res


def suite_eq22(ctx: Context) -> SuiteResult:
    res = SuiteResult("eq22")
    for e in catalog.entries():
        r = ctx.report(e.name)
        if r.berwald["null_points"]:
            continue
        k = mk._kernel(e.spec, r.points, 1)
        diff = np.max(np.abs(k.f_ls - mk.closed_form_f(e.spec, r.points)))
        res.checks.append(ctx.residual(f"{e.name}: least-squares f = ∂ ln√||b|²|", diff, 1e-8))
    return res


def trivialize_cosmological(entry=None):
    """Metrized cosmological data pulled back along the inverse of the trivializing map."""
    entry = entry or catalog.get("cosmological")
    spec = entry.spec
    box = entry.box
    metr = mk.construct_metrization(spec, base_point=[(lo + hi) / 2 for lo, hi in box])
    tmap = entry.trivializing_map
    params = spec.metric.params
    a_new = pr.pullback(metr.a_tilde, tmap["coords"], tmap["old_of_new"], params)
    mapping = {old: ex.bind(ex.parse(v, tmap["coords"], list(params)), params)
               for old, v in tmap["old_of_new"].items()}
    d = ex.Differentiator()
    b_old = [ex.substitute(c, mapping) for c in metr.b_tilde.components]
    b_new = [ex.total(ex.mul(b_old[i], d(mapping[spec.coords[i]], new)) for i in range(spec.n))
             for new in tmap["coords"]]
    return a_new, pr.OneFormSpec(tmap["coords"], b_new)


def suite_example1(ctx: Context) -> SuiteResult:
    res = SuiteResult("example1")
    e = catalog.get("cosmological")
    r = ctx.report(e.name)
    res.checks.append(ctx.residual("affine Ricci vanishes", r.curvature["affine_ricci_max"], 1e-8))
    res.checks.append(Check("globally metrizable", r.verdict.globally_metrizable == mk.YES))
    a_new, b_new = trivialize_cosmological(e)
    c = e.spec.metric.params.get("c", 1.0)
    lo = [np.log(e.box[0][0]) / c ** e.spec.m] + [l / c ** e.spec.m for l, _ in e.box[1:]]
    hi = [np.log(e.box[0][1]) / c ** e.spec.m] + [h / c ** e.spec.m for _, h in e.box[1:]]
    pts = mk.grid_points(list(zip(lo, hi)), 5)
    riem = pr.riemann_batch(pr.christoffel(a_new), pts)
    res.checks.append(ctx.residual("curvature after coordinate change", np.max(np.abs(riem)), 1e-8))
    want = np.array(e.trivializing_map["metric"], dtype=float)
    res.checks.append(ctx.residual("metric becomes constant diag(1,-1,-1,-1)",
                                   np.max(np.abs(a_new.values(pts) - want)), 1e-8))
    want_b = np.array(e.trivializing_map["oneform"], dtype=float)
    res.checks.append(ctx.residual("1-form becomes dT", np.max(np.abs(b_new.values(pts) - want_b)), 1e-8))
    return res


def perturbed_ppwave(extra: str = "x^2") -> MKropinaSpec:
    sf = catalog.get("ppwave-harmonic").specfile
    sf.metric[(0, 0)] = f"{sf.metric[(0, 0)]} + {extra}"
    return sf.to_mkropina()


def suite_prop8(ctx: Context) -> SuiteResult:
    res = SuiteResult("prop8")
    e = catalog.get("ppwave-harmonic")
    r = ctx.report(e.name)
    res.checks.append(ctx.residual("affine Ricci vanishes", r.curvature["affine_ricci_max"], 1e-8))
    res.checks.append(ctx.residual("transverse harmonicity", r.classification.harmonicity_residual, 1e-9))
    res.checks.append(Check("tag pp-wave", r.classification.tag == mk.PP_WAVE))
    spec = perturbed_ppwave()
    ricci = mk.affine_ricci_batch(spec, r.points)
    ruu = float(np.max(np.abs(ricci[:, 0, 0])))
    res.checks.append(ctx.residual("perturbed H + x²: max|R̄_uu| = 1", abs(ruu - 1.0), 1e-8,
                                   f"max|R̄_uu| = {ruu:.12f}"))
    H = mk.ppwave_profile(spec)
    lap = mk.harmonicity_residual(spec, H, r.points)
    res.checks.append(Check("perturbed H is detected as non-harmonic", lap > 1.0, lap))
    return res


def homogeneity_residuals(spec: MKropinaSpec, box, count: int, rng) -> dict[str, float]:
    X, Y = fs.sample_tangent_points(spec, box, count, rng)
    F = fs.F_values(spec, X, Y)
    N = fs.nonlinear_connection_batch(spec, X, Y)
    g = fs.fundamental_tensor_batch(spec, X, Y)
    out = {"F": 0.0, "N": 0.0, "g": 0.0}
    for lam in LAMBDAS:
        F2 = fs.F_values(spec, X, lam * Y)
        N2 = fs.nonlinear_connection_batch(spec, X, lam * Y)
        g2 = fs.fundamental_tensor_batch(spec, X, lam * Y)
        out["F"] = max(out["F"], float(np.max(np.abs(F2 - lam * F) / np.abs(lam * F))))
        nscale = np.maximum(np.max(np.abs(N), axis=(1, 2)), 1e-300)[:, None, None]
        gscale = np.max(np.abs(g), axis=(1, 2))[:, None, None]
        if np.any(np.max(np.abs(N), axis=(1, 2)) > 0):
            out["N"] = max(out["N"], float(np.max(np.abs(N2 - lam * N) / (lam * nscale))))
        out["g"] = max(out["g"], float(np.max(np.abs(g2 - g) / gscale)))
    out["gyy"] = float(np.max(np.abs(np.einsum("bij,bi,bj->b", g, Y, Y) - F ** 2) / F ** 2))
    ric, R = fs.finsler_ricci_batch(spec, X[: max(4, count // 5)], Y[: max(4, count // 5)])
    YY = Y[: max(4, count // 5)]
    out["euler"] = float(np.max(np.abs(ric - np.einsum("bij,bi,bj->b", R, YY, YY))))
    return out


def suite_homogeneity(ctx: Context) -> SuiteResult:
    res = SuiteResult("homogeneity")
    for i, e in enumerate(catalog.entries()):
        r = homogeneity_residuals(e.spec, e.box, 25, ctx.rng(200 + i))
        res.checks.append(ctx.residual(f"{e.name}: F(x, λy) = λF", r["F"], 1e-9))
        res.checks.append(ctx.residual(f"{e.name}: N(x, λy) = λN", r["N"], 1e-9))
        res.checks.append(ctx.residual(f"{e.name}: g(x, λy) = g", r["g"], 1e-9))
        res.checks.append(ctx.residual(f"{e.name}: g(y, y) = F²", r["gyy"], 1e-9))
        res.checks.append(ctx.residual(f"{e.name}: Ric = R_ij y^i y^j", r["euler"], 1e-6))
    return res


def suite_catalog(ctx: Context) -> SuiteResult:
    res = SuiteResult("catalog")
    for e in catalog.entries():
        r = ctx.report(e.name)
        got = observed(r)
        for key, want in e.expected.items():
            res.checks.append(Check(f"{e.name}: {key}", got[key] == want, detail=f"got {got[key]!r}, want {want!r}"))
    return res


def observed(r: mk.AnalysisReport) -> dict:
    v = r.verdict
    return {
        "is_berwald": v.is_berwald,
        "locally_metrizable": v.locally_metrizable,
        "globally_metrizable": v.globally_metrizable,
        "ricci_flat": r.ricci_flat,
        "affinely_ricci_flat": r.affinely_ricci_flat,
        "classification_tag": r.classification.tag,
    }


SUITES = {
    "lemma1": suite_lemma1,
    "lemma2": suite_lemma2,
    "theorem1": suite_theorem1,
    "counterexample": suite_counterexample,
    "eq22": suite_eq22,
    "example1": suite_example1,
    "prop8": suite_prop8,
    "homogeneity": suite_homogeneity,
    "catalog": suite_catalog,
}


def run(names=None, tol_override: float | None = None, ctx: Context | None = None) -> list[SuiteResult]:
    ctx = ctx or Context(tol_override)
    out = []
    for name in names or list(SUITES):
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
        t0 = time.perf_counter()
        result = SUITES[name](ctx)
        result.seconds = time.perf_counter() - t0
        out.append(result)
    return out


def summary_table(results: list[SuiteResult]) -> str:
    lines = [f"{'suite':<16}{'status':<8}{'checks':>7}  {'max residual':>13}  {'seconds':>8}"]
    for r in results:
        mr = "-" if r.max_residual is None else f"{r.max_residual:.3e}"
        lines.append(f"{r.name:<16}{'PASS' if r.passed else 'FAIL':<8}{len(r.checks):>7}  {mr:>13}  {r.seconds:>8.2f}")
    return "\n".join(lines)
