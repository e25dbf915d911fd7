"""Berwald condition, affine connection and metrizability of m-Kropina spaces.

For F = α^(1+m) β^(−m) with n > 2 the space is Berwald iff

    ∇̊_j b_i = m (f·b) a_ij + b_i f_j − m f_i b_j

for some 1-form f.  The affine connection is then Γ = Γ̊ + ΔΓ with
ΔΓ^l_ij = m (a_ij f^l − δ^l_j f_i − δ^l_i f_j), and the f-change
ã = e^(−2mψ) a, b̃ = e^(−(1+m)ψ) b metrizes it whenever f = dψ.

Every grid computation goes through one batched kernel, :func:`_kernel`,
which returns f together with its exact first derivatives so that Γ and
∂Γ (and hence the affine curvature) need no finite differences.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad_vec

from . import expr as ex
from . import pseudo_riemann as pr
from .finsler import F_values, MKropinaSpec, sample_tangent_points
from .tensor import DOWN, UP, SingularMatrixError, Tensor, as_points, check_nonsingular

NULL_THRESHOLD = 1e-6
BERWALD_TOL = 1e-8
METRIZABLE_TOL = 1e-6
RANK_TOL = 1e-10

YES = "yes"
YES_H1 = "yes-under-trivial-H1-assumption"
UNKNOWN = "unknown"
NO = "no"

FLAT_CONSTANT = "flat-constant-form"
PP_WAVE = "pp-wave"
OTHER = "other"
NOT_METRIZABLE = "not-metrizable"


class NumericalError(RuntimeError):
    """The pipeline hit a numerically ill-posed situation."""


class AmbiguousSolutionError(NumericalError):
    """The Berwald system for f is rank deficient at a point."""


# ---------------------------------------------------------------------------
# Batched kernel
# ---------------------------------------------------------------------------


@dataclass
class _Kernel:
    a: np.ndarray
    ainv: np.ndarray
    b: np.ndarray
    bu: np.ndarray
    nsq: np.ndarray
    null: np.ndarray
    C: np.ndarray
    f: np.ndarray
    f_ls: np.ndarray
    f_closed: np.ndarray | None
    residual: np.ndarray
    gamma0: np.ndarray
    gamma: np.ndarray
    df: np.ndarray | None = None
    dgamma: np.ndarray | None = None


def null_mask(nsq: np.ndarray, b: np.ndarray) -> np.ndarray:
    """|b|² below NULL_THRESHOLD times the componentwise scale Σ b_i²."""
    return np.abs(nsq) < NULL_THRESHOLD * np.einsum("bi,bi->b", b, b)


def _system(m: float, a, b, bu) -> np.ndarray:
    """M[(ij), k] = m b^k a_ij + b_i δ_jk − m b_j δ_ik, shape (B, n², n)."""
    bsz, n = b.shape
    eye = np.eye(n)
    M = (m * np.einsum("bk,bij->bijk", bu, a)
         + np.einsum("bi,jk->bijk", b, eye)
         - m * np.einsum("bj,ik->bijk", b, eye))
    return M.reshape(bsz, n * n, n)


def berwald_residual(m: float, a, b, bu, C, f) -> np.ndarray:
    """max_ij |C_ij − m (f·b) a_ij − b_i f_j + m f_i b_j| per point."""
    fb = np.einsum("bk,bk->b", f, bu)
    rhs = m * fb[:, None, None] * a + np.einsum("bi,bj->bij", b, f) - m * np.einsum("bi,bj->bij", f, b)
    return np.max(np.abs(C - rhs), axis=(1, 2))


def _kernel(spec: MKropinaSpec, pts: np.ndarray, order: int = 1, null=None) -> _Kernel:
    """f, residual and the affine connection at ``pts``; order 2 adds exact ∂f and ∂Γ."""
    m = spec.m
    bsz, n = pts.shape
    ajet = spec.metric.jet(pts, order)
    bjet = spec.oneform.jet(pts, order)
    a, da = ajet[0], ajet[1]
    b, db = bjet[0], bjet[1]
    check_nonsingular(a)
    ainv = np.linalg.inv(a)
    if order >= 2:
        gamma0, dgamma0 = pr.christoffel_derivative(a, da, ajet[2], ainv)
    else:
        gamma0 = pr.christoffel_from_jet(a, da, ainv)
    C = pr.covariant_derivative_batch(gamma0, b, db)
    bu = np.einsum("bij,bj->bi", ainv, b)
    nsq = np.einsum("bi,bi->b", bu, b)
    if null is None:
        null = null_mask(nsq, b)
    if np.any(np.einsum("bi,bi->b", b, b) == 0):
        raise NumericalError("the 1-form b vanishes at a grid point")

    M = _system(m, a, b, bu)
    Mt = np.swapaxes(M, 1, 2)
    MtM = Mt @ M
    ev = np.linalg.eigvalsh(MtM)  # squared singular values of M, ascending
    rank_ok = ev[:, 0] > RANK_TOL ** 2 * ev[:, -1]
    if np.any(null & ~rank_ok):
        raise AmbiguousSolutionError("Berwald system for f is rank deficient at a null point")
    MtM = np.where(rank_ok[:, None, None], MtM, np.eye(n))
    Cf = C.reshape(bsz, n * n)
    f_ls = np.linalg.solve(MtM, np.einsum("bki,bi->bk", Mt, Cf)[..., None])[..., 0]

    safe = np.where(null, 1.0, nsq)
    f_closed = np.einsum("bi,bij->bj", bu, C) / safe[:, None]
    f = np.where(null[:, None], f_ls, f_closed)
    residual = berwald_residual(m, a, b, bu, C, f)

    eye = np.eye(n)
    fu = np.einsum("blk,bk->bl", ainv, f)
    delta = m * (np.einsum("bij,bl->blij", a, fu)
                 - np.einsum("lj,bi->blij", eye, f)
                 - np.einsum("li,bj->blij", eye, f))
    out = _Kernel(a, ainv, b, bu, nsq, null, C, f, f_ls, f_closed, residual, gamma0, gamma0 + delta)
    if order < 2:
        return out

    ddb = bjet[2]
    dainv = -np.einsum("bkp,bmpq,bql->bmkl", ainv, da, ainv)
    dbu = np.einsum("bmil,bl->bmi", dainv, b) + np.einsum("bil,bml->bmi", ainv, db)
    # dC[m, i, j] = ∂_m ∇_j b_i
    dC = (np.einsum("bmji->bmij", ddb)
          - np.einsum("bmlji,bl->bmij", dgamma0, b)
          - np.einsum("blji,bml->bmij", gamma0, db))
    dnsq = np.einsum("bmi,bi->bm", dbu, b) + np.einsum("bi,bmi->bm", bu, db)
    df_closed = (np.einsum("bmi,bij->bmj", dbu, C) + np.einsum("bi,bmij->bmj", bu, dC)) / safe[:, None, None]
    df_closed -= np.einsum("bj,bm->bmj", f_closed, dnsq) / safe[:, None, None]

    dM = (m * np.einsum("bmk,bij->bmijk", dbu, a)
          + m * np.einsum("bk,bmij->bmijk", bu, da)
          + np.einsum("bmi,jk->bmijk", db, eye)
          - m * np.einsum("bmj,ik->bmijk", db, eye)).reshape(bsz, n, n * n, n)
    r = Cf - np.einsum("bpk,bk->bp", M, f_ls)
    dCf = dC.reshape(bsz, n, n * n)
    rhs = (np.einsum("bmpk,bp->bmk", dM, r)
           + np.einsum("bpk,bmp->bmk", M, dCf - np.einsum("bmpk,bk->bmp", dM, f_ls)))
    df_ls = np.linalg.solve(MtM[:, None], rhs[..., None])[..., 0]
    df = np.where(null[:, None, None], df_ls, df_closed)  # df[b, m, j] = ∂_m f_j

    dfu = np.einsum("bmlk,bk->bml", dainv, f) + np.einsum("blk,bmk->bml", ainv, df)
    ddelta = m * (np.einsum("bmij,bl->bmlij", da, fu)
                  + np.einsum("bij,bml->bmlij", a, dfu)
                  - np.einsum("lj,bmi->bmlij", eye, df)
                  - np.einsum("li,bmj->bmlij", eye, df))
    out.df = df
    out.dgamma = dgamma0 + ddelta
    return out


def _chunked(fn, pts: np.ndarray, threads: int = 1, chunk: int = 256):
    """Apply a batched ``fn`` to slices of ``pts``, optionally on a thread pool."""
    pieces = [pts[i:i + chunk] for i in range(0, len(pts), chunk)] or [pts]
    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, pieces))
    else:
        results = [fn(p) for p in pieces]
    return results


# ---------------------------------------------------------------------------
# Public single-point API
# ---------------------------------------------------------------------------


@dataclass
class BerwaldSolution:
    point: np.ndarray
    f: Tensor
    fb_scalar: float
    residual: float
    null_branch: bool
    is_berwald: bool

    def f_at(self) -> Tensor:
        return self.f


def solve_f(spec: MKropinaSpec, p, berwald_tol: float = BERWALD_TOL) -> BerwaldSolution:
    """Solve the Berwald condition for f at one point."""
    pts, _ = as_points(p, spec.n)
    k = _kernel(spec, pts, 1)
    f = k.f[0]
    return BerwaldSolution(pts[0], Tensor(f, (DOWN,)), float(f @ k.bu[0]), float(k.residual[0]),
                           bool(k.null[0]), bool(k.residual[0] <= berwald_tol))


def f_batch(spec: MKropinaSpec, pts) -> np.ndarray:
    pts, _ = as_points(pts, spec.n)
    return _kernel(spec, pts, 1).f


def closed_form_f(spec: MKropinaSpec, pts) -> np.ndarray:
    """∂_j ln√(||b|²|) = ∂_j N / (2N) with N = a^ij b_i b_j, from exact jets."""
    pts, _ = as_points(pts, spec.n)
    a, da = spec.metric.jet(pts, 1)
    b, db = spec.oneform.jet(pts, 1)
    ainv = np.linalg.inv(a)
    bu = np.einsum("bij,bj->bi", ainv, b)
    nsq = np.einsum("bi,bi->b", bu, b)
    dnsq = 2.0 * np.einsum("bi,bmi->bm", bu, db) - np.einsum("bp,bmpq,bq->bm", bu, da, bu)
    return dnsq / (2.0 * nsq[:, None])


def delta_gamma(spec: MKropinaSpec, f, p) -> Tensor:
    """ΔΓ^l_ij = m a^lk (a_ij f_k − a_jk f_i − a_ki f_j)."""
    pts, _ = as_points(p, spec.n)
    a = spec.metric.values(pts)[0]
    ainv = np.linalg.inv(a)
    f = np.asarray(f, dtype=float)
    m = spec.m
    low = m * (np.einsum("ij,k->kij", a, f) - np.einsum("jk,i->kij", a, f) - np.einsum("ki,j->kij", a, f))
    return Tensor(np.einsum("lk,kij->lij", ainv, low), (UP, DOWN, DOWN))


def affine_connection(spec: MKropinaSpec) -> pr.ConnectionField:
    """Γ = Γ̊ + ΔΓ with exact first derivatives."""

    def gamma_fn(pts):
        return _kernel(spec, pts, 1).gamma

    def jet_fn(pts):
        k = _kernel(spec, pts, 2)
        return k.gamma, k.dgamma

    return pr.ConnectionField(spec.n, gamma_fn, jet_fn, coords=spec.coords, label="affine")


def affine_ricci_batch(spec: MKropinaSpec, pts) -> np.ndarray:
    pts, _ = as_points(pts, spec.n)
    k = _kernel(spec, pts, 2)
    return pr.ricci_from_riemann(pr.riemann_from_jet(k.gamma, k.dgamma))


def fd_df(spec: MKropinaSpec, pts, fd_step: float | None = None, null=None) -> np.ndarray:
    """∂_m f_j by central differences of the pointwise solver (branch frozen per point)."""
    pts, _ = as_points(pts, spec.n)
    if null is None:
        null = _kernel(spec, pts, 1).null

    def fn(stencil):
        reps = len(stencil) // len(pts)
        return _kernel(spec, stencil, 1, null=np.tile(null, reps)).f

    return pr.fd_gradient(fn, pts, fd_step)


def curl(df: np.ndarray) -> np.ndarray:
    """(df)_ij = ∂_i f_j − ∂_j f_i from df[b, m, j] = ∂_m f_j."""
    return df - np.swapaxes(df, 1, 2)


def lemma2_residual(spec: MKropinaSpec, ricci: np.ndarray, df: np.ndarray) -> np.ndarray:
    """|R̄_[ij] − (mn/2)(∂_j f_i − ∂_i f_j)| per point (max over components)."""
    skew = 0.5 * (ricci - np.swapaxes(ricci, 1, 2))
    predicted = 0.5 * spec.m * spec.n * (-curl(df))
    return np.max(np.abs(skew - predicted), axis=(1, 2))


def affine_ricci(spec: MKropinaSpec, grid, fd_step: float | None = None) -> dict:
    """R̄ on the grid with its symmetric and skew parts and the skew identity check."""
    pts, _ = as_points(grid, spec.n)
    ricci = affine_ricci_batch(spec, pts)
    df = fd_df(spec, pts, fd_step)
    sym = 0.5 * (ricci + np.swapaxes(ricci, 1, 2))
    skew = 0.5 * (ricci - np.swapaxes(ricci, 1, 2))
    return {
        "ricci": ricci,
        "sym": sym,
        "skew": skew,
        "skew_max": float(np.max(np.abs(skew))),
        "lemma2_residual": float(np.max(lemma2_residual(spec, ricci, df))),
    }


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


def grid_points(box: Sequence[tuple[float, float]], grid: int = 5, seed: int = 0) -> np.ndarray:
    """Lattice of grid^n points for n ≤ 4; grid^4 seeded uniform samples above that."""
    n = len(box)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if np.any(hi < lo):
        raise ValueError("box bounds must satisfy lo ≤ hi")
    if n <= 4:
        axes = [np.linspace(l, h, grid) if h > l else np.array([l]) for l, h in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(grid ** 4, n))


def admissible_points(spec: MKropinaSpec, pts: np.ndarray) -> np.ndarray:
    """Boolean mask of points where a and b are finite, a is nondegenerate and b ≠ 0."""
    ok = np.ones(len(pts), dtype=bool)
    for i, p in enumerate(pts):
        try:
            a = spec.metric.values(p[None])
            b = spec.oneform.values(p[None])
            check_nonsingular(a)
            ok[i] = bool(np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.any(b != 0))
        except (ex.DomainError, SingularMatrixError):
            ok[i] = False
    return ok


def _fast_admissible(spec, pts):
    try:
        a = spec.metric.values(pts)
        b = spec.oneform.values(pts)
        check_nonsingular(a)
        if np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.any(b != 0, axis=1)):
            return np.ones(len(pts), dtype=bool)
    except (ex.DomainError, SingularMatrixError):
        pass
    return admissible_points(spec, pts)


# ---------------------------------------------------------------------------
# Causal character
# ---------------------------------------------------------------------------


def causal_labels(a: np.ndarray, nsq: np.ndarray, null: np.ndarray) -> list[str]:
    """timelike/spacelike/null for Lorentzian a; positive/negative otherwise."""
    out = []
    for ai, s, z in zip(a, nsq, null):
        if z:
            out.append("null")
            continue
        neg, pos = pr.signature(ai)
        if neg == 1 and pos == len(ai) - 1:
            out.append("timelike" if s < 0 else "spacelike")
        elif pos == 1 and neg == len(ai) - 1:
            out.append("timelike" if s > 0 else "spacelike")
        else:
            out.append("positive" if s > 0 else "negative")
    return out


# ---------------------------------------------------------------------------
# Verdict
# ---------------------------------------------------------------------------


@dataclass
class MetrizabilityVerdict:
    is_berwald: bool
    berwald_residual: float
    df_max: float | None = None
    skew_ricci_max: float | None = None
    locally_metrizable: bool | None = None
    globally_metrizable: str = UNKNOWN
    paths_agree: bool | None = None
    lemma2_residual: float | None = None
    causal_character: str = ""
    regions: dict = field(default_factory=dict)
    null_branch: bool = False
    tol: float = METRIZABLE_TOL


@dataclass
class _GridState:
    pts: np.ndarray
    kernel: _Kernel
    ricci: np.ndarray | None
    riemann: np.ndarray | None
    df_fd: np.ndarray | None
    labels: list[str]


def _merge(kernels: list[_Kernel]) -> _Kernel:
    fields = {}
    for name in _Kernel.__dataclass_fields__:
        vals = [getattr(k, name) for k in kernels]
        fields[name] = None if vals[0] is None else np.concatenate(vals)
    return _Kernel(**fields)


def _grid_state(spec: MKropinaSpec, pts: np.ndarray, fd_step, threads: int, berwald: bool | None = None):
    kern = _merge(_chunked(lambda p: _kernel(spec, p, 2), pts, threads))
    labels = causal_labels(kern.a, kern.nsq, kern.null)
    ricci = riemann = df_fd = None
    if berwald is None:
        berwald = True
    if berwald:
        riemann = pr.riemann_from_jet(kern.gamma, kern.dgamma)
        ricci = pr.ricci_from_riemann(riemann)

        def df_chunk(p):
            return fd_df(spec, p, fd_step)

        df_fd = np.concatenate(_chunked(df_chunk, pts, threads))
    return _GridState(pts, kern, ricci, riemann, df_fd, labels)


def _verdict_from_state(spec, st: _GridState, tol_berwald, tol, simply_connected) -> MetrizabilityVerdict:
    kern = st.kernel
    res = float(np.max(kern.residual))
    is_berwald = res <= tol_berwald
    chars = sorted(set(st.labels))
    character = chars[0] if len(chars) == 1 else "mixed"
    v = MetrizabilityVerdict(is_berwald, res, causal_character=character,
                             null_branch=bool(np.any(kern.null)), tol=tol)
    if not is_berwald:
        return v
    df_pt = np.max(np.abs(curl(st.df_fd)), axis=(1, 2))
    skew_pt = np.max(np.abs(0.5 * (st.ricci - np.swapaxes(st.ricci, 1, 2))), axis=(1, 2))
    v.df_max = float(np.max(df_pt))
    v.skew_ricci_max = float(np.max(skew_pt))
    v.lemma2_residual = float(np.max(lemma2_residual(spec, st.ricci, st.df_fd)))
    by_df = v.df_max <= tol
    by_skew = v.skew_ricci_max <= tol
    v.paths_agree = by_df == by_skew
    v.locally_metrizable = by_df and by_skew
    if character == "mixed":
        labels = np.array(st.labels)
        for c in chars:
            sel = labels == c
            v.regions[c] = {
                "points": int(np.sum(sel)),
                "df_max": float(np.max(df_pt[sel])),
                "skew_ricci_max": float(np.max(skew_pt[sel])),
                "locally_metrizable": bool(np.max(df_pt[sel]) <= tol and np.max(skew_pt[sel]) <= tol),
            }
    if not v.locally_metrizable:
        v.globally_metrizable = NO
    elif character == "mixed":
        v.globally_metrizable = UNKNOWN
    elif not np.any(kern.null):
        v.globally_metrizable = YES
    elif np.all(kern.null) and simply_connected:
        v.globally_metrizable = YES_H1
    else:
        v.globally_metrizable = UNKNOWN
    return v


def metrizability_verdict(spec: MKropinaSpec, grid, tol: float = METRIZABLE_TOL,
                          tol_berwald: float = BERWALD_TOL, simply_connected: bool = False,
                          fd_step: float | None = None, threads: int = 1) -> MetrizabilityVerdict:
    pts, _ = as_points(grid, spec.n)
    st = _grid_state(spec, pts, fd_step, threads)
    return _verdict_from_state(spec, st, tol_berwald, tol, simply_connected)


# ---------------------------------------------------------------------------
# Metrization
# ---------------------------------------------------------------------------


def _det(mat: list[list[ex.Expr]]) -> ex.Expr:
    n = len(mat)
    if n == 1:
        return mat[0][0]
    terms = []
    for j in range(n):
        if ex.is_zero(mat[0][j]):
            continue
        minor = [row[:j] + row[j + 1:] for row in mat[1:]]
        term = ex.mul(mat[0][j], _det(minor))
        terms.append(term if j % 2 == 0 else ex.neg(term))
    return ex.total(terms)


def symbolic_norm_sq(spec: MKropinaSpec) -> ex.Expr:
    """|b|² = a^ij b_i b_j as an expression, via the cofactor inverse."""
    n = spec.n
    a = [[ex.bind(spec.metric.components[i][j], spec.metric.params) for j in range(n)] for i in range(n)]
    b = [ex.bind(c, spec.oneform.params) for c in spec.oneform.components]
    if all(ex.is_zero(a[i][j]) for i in range(n) for j in range(n) if i != j):
        return ex.total(ex.div(ex.power(b[i], 2.0), a[i][i]) for i in range(n) if not ex.is_zero(b[i]))
    terms = []
    for i in range(n):
        for j in range(n):
            if ex.is_zero(b[i]) or ex.is_zero(b[j]):
                continue
            minor = [row[:i] + row[i + 1:] for k, row in enumerate(a) if k != j]
            cof = _det(minor)
            if ex.is_zero(cof):
                continue
            term = ex.mul(ex.mul(cof, b[i]), b[j])
            terms.append(term if (i + j) % 2 == 0 else ex.neg(term))
    return ex.div(ex.total(terms), _det(a))


@dataclass
class Metrization:
    branch: str
    a_tilde: object
    b_tilde: object
    psi: object
    base_point: np.ndarray | None = None

    def psi_values(self, pts) -> np.ndarray:
        pts, _ = as_points(pts)
        if isinstance(self.psi, ex.Expr):
            fn = ex.compile_exprs([self.psi], self.a_tilde.coords)
            return np.asarray(fn(*pts.T)[0], dtype=float) * np.ones(len(pts))
        return self.psi(pts)

    def psi_string(self) -> str:
        return ex.to_string(self.psi) if isinstance(self.psi, ex.Expr) else "pointwise"


def poincare_potential(spec: MKropinaSpec, base_point, null=True):
    """ψ(x) = ∫₀¹ f(x₀ + t(x − x₀))·(x − x₀) dt, by adaptive vector quadrature."""
    x0 = np.asarray(base_point, dtype=float)
    memo: dict = {}

    def psi(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        key = pts.tobytes()
        if key in memo:
            return memo[key]
        dx = pts - x0

        def integrand(t):
            f = _kernel(spec, x0 + t * dx, 1).f
            return np.einsum("bi,bi->b", f, dx)

        val, _ = quad_vec(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-11, norm="max")
        if len(memo) >= 4:
            memo.pop(next(iter(memo)))
        memo[key] = val
        return val

    return psi


def construct_metrization(spec: MKropinaSpec, verdict: MetrizabilityVerdict | None = None,
                          base_point=None) -> Metrization:
    """ã = e^(−2mψ) a and b̃ = e^(−(1+m)ψ) b with f = dψ."""
    if verdict is not None and not verdict.locally_metrizable:
        raise ValueError("F is not locally metrizable on the grid")
    m = spec.m
    n = spec.n
    null = verdict.null_branch if verdict is not None else None
    if null is None:
        if base_point is None:
            raise ValueError("pass a verdict or a base point to pick the branch")
        null = bool(_kernel(spec, np.atleast_2d(np.asarray(base_point, dtype=float)), 1).null[0])
    if not null:
        nsq = symbolic_norm_sq(spec)
        psi = ex.mul(ex.Num(0.5), ex.ln(ex.absolute(nsq)))
        scale_a = ex.power(ex.absolute(nsq), -m)
        scale_b = ex.power(ex.absolute(nsq), -(1.0 + m) / 2.0)
        comps = {}
        for i in range(n):
            for j in range(i, n):
                c = ex.bind(spec.metric.components[i][j], spec.metric.params)
                if not ex.is_zero(c):
                    comps[(i, j)] = ex.mul(scale_a, c)
        a_t = pr.MetricSpec(spec.coords, comps)
        b_t = pr.OneFormSpec(spec.coords, [ex.mul(scale_b, ex.bind(c, spec.oneform.params))
                                           for c in spec.oneform.components])
        return Metrization("closed-form", a_t, b_t, psi)
    if base_point is None:
        raise ValueError("the null branch needs a base point for the Poincaré potential")
    x0 = np.asarray(base_point, dtype=float)
    psi = poincare_potential(spec, x0)

    def a_fn(pts):
        return np.exp(-2.0 * m * psi(pts))[:, None, None] * spec.metric.values(pts)

    def b_fn(pts):
        return np.exp(-(1.0 + m) * psi(pts))[:, None] * spec.oneform.values(pts)

    a_t = pr.PointwiseMetric(n, a_fn, coords=spec.coords)
    b_t = pr.PointwiseOneForm(n, b_fn, coords=spec.coords)
    return Metrization("poincare", a_t, b_t, psi, x0)


@dataclass
class MetrizationChecks:
    value_identity: float
    b_parallel: float
    christoffel_match: float


def verify_metrization(spec: MKropinaSpec, metr: Metrization, points, tangent_points) -> MetrizationChecks:
    """(a) F̃ = F at tangent points, (b) ∇̃b̃ = 0, (c) Γ(ã) = affine Γ."""
    pts, _ = as_points(points, spec.n)
    X, Y = tangent_points
    F = F_values(spec, X, Y)
    psi = metr.psi_values(X)
    a_t = np.exp(-2.0 * spec.m * psi)[:, None, None] * spec.metric.values(X)
    b_t = np.exp(-(1.0 + spec.m) * psi)[:, None] * spec.oneform.values(X)
    A_t = np.einsum("bij,bi,bj->b", a_t, Y, Y)
    beta_t = np.einsum("bi,bi->b", b_t, Y)
    F_t = np.abs(A_t) ** ((1.0 + spec.m) / 2.0) * beta_t ** (-spec.m)
    value = float(np.max(np.abs(F_t - F) / np.abs(F)))
    conn_t = pr.christoffel(metr.a_tilde)
    gamma_t = conn_t.gammas(pts)
    bt, dbt = pr.oneform_jet(metr.b_tilde, pts, 1)
    parallel = float(np.max(np.abs(pr.covariant_derivative_batch(gamma_t, bt, dbt))))
    gamma_aff = _kernel(spec, pts, 1).gamma
    match = float(np.max(np.abs(gamma_t - gamma_aff)))
    return MetrizationChecks(value, parallel, match)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def ppwave_profile(spec: MKropinaSpec) -> ex.Expr | None:
    """H when a = −2dudv + H(u,x,y)du² + dx² + dy² and b = du in (u, v, x, y); else None."""
    if spec.n != 4:
        return None
    a = [[ex.bind(spec.metric.components[i][j], spec.metric.params) for j in range(4)] for i in range(4)]
    b = [ex.bind(c, spec.oneform.params) for c in spec.oneform.components]

    def is_num(e, v):
        return isinstance(e, ex.Num) and e.value == v

    if not (is_num(a[0][1], -1.0) and is_num(a[2][2], 1.0) and is_num(a[3][3], 1.0)):
        return None
    if not all(ex.is_zero(a[i][j]) for i, j in ((0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 3))):
        return None
    if not (is_num(b[0], 1.0) and all(ex.is_zero(c) for c in b[1:])):
        return None
    H = a[0][0]
    v = spec.coords[1]
    if any(s.name == v for s in ex.free_symbols(H)):
        return None
    return H


def harmonicity_residual(spec: MKropinaSpec, H: ex.Expr, pts) -> float:
    """max |δ^ab ∂_a ∂_b H| over the points, from exact second derivatives."""
    d = ex.Differentiator()
    x, y = spec.coords[2], spec.coords[3]
    lap = ex.add(d(d(H, x), x), d(d(H, y), y))
    fn = ex.compile_exprs([lap], spec.coords)
    vals = np.asarray(fn(*np.asarray(pts).T)[0], dtype=float) * np.ones(len(pts))
    return float(np.max(np.abs(vals)))


@dataclass
class Classification:
    supported: bool
    tag: str | None
    reason: str = ""
    harmonicity_residual: float | None = None
    metrized_riemann_max: float | None = None


# ---------------------------------------------------------------------------
# Full analysis
# ---------------------------------------------------------------------------


@dataclass
class AnalysisOptions:
    box: Sequence[tuple[float, float]]
    grid: int = 5
    tol_berwald: float = BERWALD_TOL
    tol_metrizable: float = METRIZABLE_TOL
    fd_step: float | None = None
    simply_connected: bool = False
    threads: int = 1
    seed: int = 0
    tangent_samples: int = 50


@dataclass
class AnalysisReport:
    spec: MKropinaSpec
    options: AnalysisOptions
    points: np.ndarray
    excluded: int
    verdict: MetrizabilityVerdict
    berwald: dict
    curvature: dict
    classification: Classification
    metrization: Metrization | None = None
    metrization_checks: MetrizationChecks | None = None
    connection_backing: str = "symbolic"

    @property
    def ricci_flat(self) -> bool | None:
        return self.curvature.get("ricci_flat")

    @property
    def affinely_ricci_flat(self) -> bool | None:
        return self.curvature.get("affinely_ricci_flat")


def _base_point(box) -> np.ndarray:
    return np.array([(lo + hi) / 2.0 for lo, hi in box], dtype=float)


def classify_ricci_flat(spec: MKropinaSpec, report: AnalysisReport) -> Classification:
    """Tag a Berwald m-Kropina space by its affinely Ricci-flat type."""
    v = report.verdict
    if not v.is_berwald:
        return Classification(False, None, "not Berwald: no affine connection")
    if spec.n != 4:
        return Classification(False, None, "classification needs n = 4")
    a = report.spec.metric.values(report.points)
    if not all(pr.is_lorentzian(ai) for ai in a):
        return Classification(False, None, "classification needs a Lorentzian metric")
    if v.causal_character == "mixed":
        return Classification(False, None, "b has mixed causal character on the grid")
    if not v.locally_metrizable:
        return Classification(True, NOT_METRIZABLE)
    if not report.curvature["affinely_ricci_flat"]:
        return Classification(True, OTHER)
    tol = report.options.tol_metrizable
    if v.causal_character != "null":
        metr = report.metrization or construct_metrization(spec, v)
        riem = pr.riemann_batch(pr.christoffel(metr.a_tilde), report.points, report.options.fd_step)
        rmax = float(np.max(np.abs(riem)))
        if rmax <= tol:
            return Classification(True, FLAT_CONSTANT, metrized_riemann_max=rmax)
        return Classification(True, OTHER, "metrized curvature does not vanish", metrized_riemann_max=rmax)
    H = ppwave_profile(spec)
    if H is None:
        return Classification(True, PP_WAVE, "not in pp-wave normal form; harmonicity not checked")
    return Classification(True, PP_WAVE, harmonicity_residual=harmonicity_residual(spec, H, report.points))


def analyze(spec: MKropinaSpec, options: AnalysisOptions) -> AnalysisReport:
    """Run the whole pipeline on a grid over ``options.box``."""
    if len(options.box) != spec.n:
        raise ValueError(f"box has {len(options.box)} ranges for {spec.n} coordinates")
    raw = grid_points(options.box, options.grid, options.seed)
    ok = _fast_admissible(spec, raw)
    pts = raw[ok]
    if len(pts) == 0:
        raise NumericalError("no admissible grid points in the box")
    threads = max(1, int(options.threads))
    kern = _merge(_chunked(lambda p: _kernel(spec, p, 1), pts, threads))
    is_berwald = bool(np.max(kern.residual) <= options.tol_berwald)
    st = _grid_state(spec, pts, options.fd_step, threads, berwald=is_berwald)
    v = _verdict_from_state(spec, st, options.tol_berwald, options.tol_metrizable, options.simply_connected)

    base = _base_point(options.box)
    kb = _kernel(spec, base[None], 1) if _fast_admissible(spec, base[None])[0] else None
    nonnull = ~st.kernel.null
    agreement = None
    if np.any(nonnull):
        agreement = float(np.max(np.abs(st.kernel.f_ls[nonnull] - closed_form_f(spec, pts[nonnull]))))
    berwald = {
        "is_berwald": v.is_berwald,
        "residual_max": v.berwald_residual,
        "null_points": int(np.sum(st.kernel.null)),
        "non_null_points": int(np.sum(nonnull)),
        "base_point": base.tolist(),
        "f_at_base": kb.f[0].tolist() if kb is not None else None,
        "fb_at_base": float(kb.f[0] @ kb.bu[0]) if kb is not None else None,
        "closed_form_agreement": agreement,
    }
    curvature: dict = {}
    if is_berwald:
        ric = st.ricci
        sym = 0.5 * (ric + np.swapaxes(ric, 1, 2))
        curvature = {
            "affine_ricci_max": float(np.max(np.abs(ric))),
            "sym_ricci_max": float(np.max(np.abs(sym))),
            "skew_ricci_max": v.skew_ricci_max,
            "ricci_flat": bool(np.max(np.abs(sym)) <= options.tol_metrizable),
            "affinely_ricci_flat": bool(np.max(np.abs(ric)) <= options.tol_metrizable),
        }
    report = AnalysisReport(spec, options, pts, int(np.sum(~ok)), v, berwald, curvature,
                            Classification(False, None))
    if v.locally_metrizable and v.causal_character != "mixed":
        metr = construct_metrization(spec, v, base_point=base)
        rng = np.random.default_rng(options.seed)
        tps = sample_tangent_points(spec, options.box, options.tangent_samples, rng)
        report.metrization = metr
        report.metrization_checks = verify_metrization(spec, metr, pts, tps)
    report.classification = classify_ricci_flat(spec, report)
    return report


__all__ = [
    "BerwaldSolution", "MetrizabilityVerdict", "Metrization", "MetrizationChecks",
    "Classification", "AnalysisOptions", "AnalysisReport", "NumericalError",
    "AmbiguousSolutionError", "solve_f", "f_batch", "closed_form_f", "delta_gamma",
    "affine_connection", "affine_ricci", "affine_ricci_batch", "fd_df", "curl",
    "lemma2_residual", "grid_points", "admissible_points", "metrizability_verdict",
    "construct_metrization", "verify_metrization", "poincare_potential",
    "symbolic_norm_sq", "ppwave_profile", "harmonicity_residual",
    "classify_ricci_flat", "analyze", "null_mask", "berwald_residual",
    "YES", "YES_H1", "UNKNOWN", "NO", "FLAT_CONSTANT", "PP_WAVE", "OTHER", "NOT_METRIZABLE",
]
