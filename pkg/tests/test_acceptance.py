"""The eight acceptance criteria at their stated tolerances, one PASS/FAIL line each."""

import pytest

from berwald_lab import verify

CRITERIA = [
    (1, "lemma1", "Finsler-Ricci R_ij = sym(affine Ricci) at 20 tangent points per Berwald entry, ≤1e-5"),
    (2, "lemma2", "skew(R̄) = (mn/2)(∂_j f_i − ∂_i f_j) on the 5⁴ grid, ≤1e-5"),
    (3, "theorem1", "metrization roundtrip: F identity ≤1e-9, ∇̃b̃ ≤1e-6, Christoffel match ≤1e-6"),
    (4, "counterexample", "rho-x-nonmetrizable: Berwald ≤1e-8, skew R̄ ≥ 0.1, detection paths agree"),
    (5, "eq22", "nowhere-null entries: solver f = ∂ ln√||b|²|, ≤1e-8"),
    (6, "example1", "cosmological: affinely flat, metrizable, trivialized curvature ≤1e-8"),
    (7, "prop8", "ppwave-harmonic: harmonicity ≤1e-9, H + x² gives max|R̄_uu| = 1"),
    (8, "homogeneity", "F, N degree-1 homogeneity ≤1e-9, Ric = R_ij y^i y^j ≤1e-6"),
]

LINES: list[str] = []
_ctx = verify.Context()


@pytest.mark.parametrize("number, suite, text", CRITERIA, ids=[f"criterion{n}-{s}" for n, s, _ in CRITERIA])
def test_criterion(number, suite, text):
    result = verify.run([suite], ctx=_ctx)[0]
    status = "PASS" if result.passed else "FAIL"
    mr = "-" if result.max_residual is None else f"{result.max_residual:.3e}"
    line = f"criterion {number} [{suite}] {status}  max residual {mr}  {text}"
    first = result.first_failure()
    if first is not None:
        line += f"  first failure: {first.name} = {first.value} (tol {first.tol}) {first.detail}"
    LINES.append(line)
    print(line)
    assert result.passed, line
