"""Finsler-side computations for m-Kropina metrics F = α^(1+m) β^(−m).

The Lagrangian L = F² = (εA)^(1+m) β^(−2m), with A = a_ij y^i y^j,
β = b_i y^i and ε = sign(A), is built as an expression in both the chart
coordinates and the fiber coordinates y.  Every derivative of L that enters
the fundamental tensor and the nonlinear connection is taken exactly; only
the x- and y-derivatives of N inside the curvature, and the vertical Hessian
of Ric, use central differences with Richardson extrapolation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .pseudo_riemann import MetricSpec, OneFormSpec
from .tensor import DOWN, UP, SingularMatrixError, Tensor, as_point, check_nonsingular

NULL_CONE_MARGIN = 1e-8
X_STEP = 1e-3
HESSIAN_STEP = 5e-2


class InadmissibleError(ValueError):
    """The tangent point lies outside the conic domain A ≠ 0, β > 0."""


class MKropinaSpec:
    """F = α^(1+m) β^(−m) from a metric a_ij and a 1-form b_i on a common chart."""

    def __init__(self, metric: MetricSpec, oneform: OneFormSpec, m: float, name: str = ""):
        if metric.coords != oneform.coords:
            raise ValueError("metric and 1-form must share the chart coordinates")
        if metric.n <= 2:
            raise ValueError("the Berwald condition needs dim M > 2")
        m = float(m)
        if m == 0.0:
            raise ValueError("m = 0 is the pseudo-Riemannian case and is excluded")
        self.metric = metric
        self.oneform = oneform
        self.m = m
        self.name = name
        self._lagrangians: dict[int, _Lagrangian] = {}

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def coords(self) -> tuple[str, ...]:
        return self.metric.coords

    def lagrangian(self, eps: int) -> "_Lagrangian":
        if eps not in self._lagrangians:
            self._lagrangians[eps] = _Lagrangian(self, eps)
        return self._lagrangians[eps]


@dataclass(frozen=True)
class TangentPoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_point(self.x)
        y = as_point(self.y, len(x))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def _ynames(n: int) -> list[str]:
    return [f"_y{i}" for i in range(n)]


class _Lagrangian:
    """Compiled exact derivatives of L on one sign region ε = sign(A)."""

    def __init__(self, spec: MKropinaSpec, eps: int):
        n = spec.n
        xs = list(spec.coords)
        ys = _ynames(n)
        a = [[ex.bind(spec.metric.components[i][j], spec.metric.params) for j in range(n)] for i in range(n)]
        b = [ex.bind(c, spec.oneform.params) for c in spec.oneform.components]
        yv = [ex.Sym(s) for s in ys]
        terms = []
        for i in range(n):
            if not ex.is_zero(a[i][i]):
                terms.append(a[i][i] * ex.power(yv[i], 2.0))
            for j in range(i + 1, n):
                if not ex.is_zero(a[i][j]):
                    terms.append(ex.Num(2.0) * a[i][j] * yv[i] * yv[j])
        big_a = ex.total(terms)
        beta = ex.total(b[i] * yv[i] for i in range(n) if not ex.is_zero(b[i]))
        L = ex.power(ex.mul(ex.Num(float(eps)), big_a), 1.0 + spec.m) * ex.power(beta, -2.0 * spec.m)
        d = ex.Differentiator()
        Ly = [d(L, y) for y in ys]
        Lyy = {(i, j): d(Ly[i], ys[j]) for i in range(n) for j in range(i, n)}
        Lyyy = {(i, j, k): d(Lyy[(i, j)], ys[k]) for i, j, k in itertools.combinations_with_replacement(range(n), 3)}
        Lx = [d(L, x) for x in xs]
        Lxy = {(mm, k): d(Ly[k], xs[mm]) for mm in range(n) for k in range(n)}
        Lxyy = {(mm, i, j): d(Lyy[(i, j)], xs[mm]) for mm in range(n) for i in range(n) for j in range(i, n)}
        self.n = n
        self.eps = eps
        self.L = L
        self._d = d
        self._xs, self._ys = xs, ys
        self._Lyyy, self._jet_fn = Lyyy, None
        self._keys = {
            "L": [()],
            "Lyy": list(Lyy),
            "Lyyy": list(Lyyy),
            "Lx": [(k,) for k in range(n)],
            "Lxy": list(Lxy),
            "Lxyy": list(Lxyy),
        }
        exprs = [L] + list(Lyy.values()) + list(Lyyy.values()) + Lx + list(Lxy.values()) + list(Lxyy.values())
        self._fn = ex.compile_exprs(exprs, xs + ys)
        self._gfn = ex.compile_exprs(list(Lyy.values()), xs + ys)

    def _split(self, vals):
        out = {}
        pos = 0
        for name, keys in self._keys.items():
            out[name] = dict(zip(keys, vals[pos:pos + len(keys)]))
            pos += len(keys)
        return out

    def hessian(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """g_ij = ½ ∂̄_i ∂̄_j L, batched."""
        n = self.n
        vals = self._gfn(*X.T, *Y.T)
        g = np.empty((len(X), n, n))
        k = 0
        for i in range(n):
            for j in range(i, n):
                g[:, i, j] = g[:, j, i] = 0.5 * vals[k]
                k += 1
        return g

    def connection(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """N[b, j, i] = N^j_i from the exact derivatives of L."""
        return self._connection(X, Y, False)

    def connection_jet(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Stacked [N, ∂̄N]: out[b, 0, j, i] = N^j_i, out[b, 1 + l, j, i] = ∂̄_l N^j_i."""
        return self._connection(X, Y, True)

    def _compile_jet(self):
        n, d, xs, ys = self.n, self._d, self._xs, self._ys
        quads = list(itertools.combinations_with_replacement(range(n), 4))
        Lyyyy = [d(self._Lyyy[q[:3]], ys[q[3]]) for q in quads]
        Lxyyy = [d(self._Lyyy[t], xs[mm]) for mm in range(n) for t in self._Lyyy]
        self._jet_keys = (quads, [(mm,) + t for mm in range(n) for t in self._Lyyy])
        self._jet_fn = ex.compile_exprs(Lyyyy + Lxyyy, xs + ys)

    def _connection(self, X: np.ndarray, Y: np.ndarray, jet: bool) -> np.ndarray:
        n = self.n
        parts = self._split(self._fn(*X.T, *Y.T))
        bsz = len(X)
        g = np.empty((bsz, n, n))
        dg = np.empty((bsz, n, n, n))  # dg[c, a, b] = ∂̄_c g_ab
        for (i, j), v in parts["Lyy"].items():
            g[:, i, j] = g[:, j, i] = 0.5 * v
        for (i, j, k), v in parts["Lyyy"].items():
            for c, a, bb in set(itertools.permutations((i, j, k))):
                dg[:, c, a, bb] = 0.5 * v
        lx = np.stack([parts["Lx"][(k,)] for k in range(n)], axis=-1)
        lxy = np.empty((bsz, n, n))  # lxy[m, k] = ∂_m ∂̄_k L
        for (mm, k), v in parts["Lxy"].items():
            lxy[:, mm, k] = v
        lxyy = np.empty((bsz, n, n, n))  # lxyy[m, i, k] = ∂_m ∂̄_i ∂̄_k L
        for (mm, i, j), v in parts["Lxyy"].items():
            lxyy[:, mm, i, j] = lxyy[:, mm, j, i] = v
        check_nonsingular(g)
        ginv = np.linalg.inv(g)
        dginv = -np.einsum("zja,zcab,zbk->zcjk", ginv, dg, ginv)  # ∂̄_c g^jk
        s = np.einsum("bm,bmk->bk", Y, lxy) - lx
        ds = lxy + np.einsum("bm,bmik->bik", Y, lxyy) - np.swapaxes(lxy, 1, 2)  # ds[i, k] = ∂̄_i S_k
        N = 0.25 * (np.einsum("bijk,bk->bji", dginv, s) + np.einsum("bjk,bik->bji", ginv, ds))
        if not jet:
            return N
        if self._jet_fn is None:
            self._compile_jet()
        quads, mixed = self._jet_keys
        vals = self._jet_fn(*X.T, *Y.T)
        ddg = np.empty((bsz, n, n, n, n))  # ddg[l, c, a, b] = ∂̄_l ∂̄_c g_ab
        for q, v in zip(quads, vals[:len(quads)]):
            for perm in set(itertools.permutations(q)):
                ddg[(slice(None),) + perm] = 0.5 * v
        lxyyy = np.empty((bsz, n, n, n, n))  # lxyyy[m, l, i, k] = ∂_m ∂̄_l ∂̄_i ∂̄_k L
        for (mm, *t), v in zip(mixed, vals[len(quads):]):
            for perm in set(itertools.permutations(t)):
                lxyyy[(slice(None), mm) + perm] = np.broadcast_to(v, (bsz,))
        # ∂̄_l ∂̄_c g^{-1} = g⁻¹ ∂̄_l g g⁻¹ ∂̄_c g g⁻¹ + (l ↔ c) − g⁻¹ ∂̄_l ∂̄_c g g⁻¹
        t1 = np.einsum("zja,zlab,zbp,zcpq,zqe->zlcje", ginv, dg, ginv, dg, ginv, optimize=True)
        ddginv = t1 + np.swapaxes(t1, 1, 2) - np.einsum("zja,zlcab,zbe->zlcje", ginv, ddg, ginv)
        # ∂̄_l ∂̄_i S_k = ∂_i∂̄_l∂̄_k L + ∂_l∂̄_i∂̄_k L + y^m ∂_m∂̄_l∂̄_i∂̄_k L − ∂_k∂̄_i∂̄_l L
        dds = (np.einsum("zilk->zlik", lxyy) + lxyy
               + np.einsum("zm,zmlik->zlik", Y, lxyyy) - np.einsum("zkil->zlik", lxyy))
        dN = 0.25 * (np.einsum("zlijk,zk->zlji", ddginv, s) + np.einsum("zijk,zlk->zlji", dginv, ds)
                     + np.einsum("zljk,zik->zlji", dginv, ds) + np.einsum("zjk,zlik->zlji", ginv, dds))
        return np.concatenate([N[:, None], dN], axis=1)


def _eps_groups(spec: MKropinaSpec, X: np.ndarray, Y: np.ndarray):
    A = np.einsum("bij,bi,bj->b", spec.metric.values(X), Y, Y)
    beta = np.einsum("bi,bi->b", spec.oneform.values(X), Y)
    return A, beta


def check_admissible(spec: MKropinaSpec, X, Y, margin: float = NULL_CONE_MARGIN) -> np.ndarray:
    """Return ε = sign(A) per point; raise InadmissibleError if A ≈ 0 or β ≤ 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    A, beta = _eps_groups(spec, X, Y)
    ynorm2 = np.einsum("bi,bi->b", Y, Y)
    if np.any(np.abs(A) < margin * ynorm2):
        raise InadmissibleError("tangent vector is on the null cone of a (A = 0)")
    if np.any(beta <= 0):
        raise InadmissibleError("tangent vector has β = b_i y^i ≤ 0")
    return np.where(A > 0, 1, -1)


def F_values(spec: MKropinaSpec, X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    check_admissible(spec, X, Y)
    A, beta = _eps_groups(spec, X, Y)
    return np.abs(A) ** ((1.0 + spec.m) / 2.0) * beta ** (-spec.m)


def F_value(spec: MKropinaSpec, tp: TangentPoint) -> float:
    """F = |A|^((1+m)/2) β^(−m)."""
    return float(F_values(spec, tp.x, tp.y)[0])


def _by_eps(spec, X, Y, method: str):
    eps = check_admissible(spec, X, Y)
    out = None
    for e in (1, -1):
        sel = eps == e
        if not np.any(sel):
            continue
        vals = getattr(spec.lagrangian(int(e)), method)(X[sel], Y[sel])
        if out is None:
            out = np.empty((len(X),) + vals.shape[1:])
        out[sel] = vals
    return out


def fundamental_tensor_batch(spec: MKropinaSpec, X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return _by_eps(spec, X, Y, "hessian")


def fundamental_tensor(spec: MKropinaSpec, tp: TangentPoint) -> Tensor:
    """g_ij = ∂̄_i ∂̄_j (½F²) by exact vertical differentiation."""
    return Tensor(fundamental_tensor_batch(spec, tp.x, tp.y)[0], (DOWN, DOWN))


def nonlinear_connection_batch(spec: MKropinaSpec, X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return _by_eps(spec, X, Y, "connection")


def nonlinear_connection(spec: MKropinaSpec, tp: TangentPoint) -> Tensor:
    """N^j_i = ¼ ∂̄_i [g^jk (y^m ∂_m ∂̄_k L − ∂_k L)], stored as data[j, i]."""
    return Tensor(nonlinear_connection_batch(spec, tp.x, tp.y)[0], (UP, DOWN))


@dataclass
class BerwaldFit:
    is_berwald: bool
    gamma: Tensor
    residual: float


def berwald_detect(spec: MKropinaSpec, x, sample_ys, tol: float = 1e-6) -> BerwaldFit:
    """Fit N^k_i(x, y) ≈ Γ^k_ij(x) y^j by least squares over the sample directions."""
    x = as_point(x, spec.n)
    Y = np.atleast_2d(np.asarray(sample_ys, dtype=float))
    n = spec.n
    if len(Y) < n + 1 or np.linalg.matrix_rank(Y) < n:
        raise ValueError("need at least n+1 sample directions spanning the fiber")
    X = np.repeat(x[None, :], len(Y), axis=0)
    N = nonlinear_connection_batch(spec, X, Y)  # (S, k, i)
    rhs = N.reshape(len(Y), n * n)
    coef, *_ = np.linalg.lstsq(Y, rhs, rcond=None)  # coef[j, (k, i)]
    fitted = Y @ coef
    scale = max(1.0, float(np.max(np.abs(rhs))))
    residual = float(np.max(np.abs(fitted - rhs))) / scale
    gamma = coef.reshape(n, n, n).transpose(1, 2, 0)  # Γ[k, i, j]
    gamma = 0.5 * (gamma + np.swapaxes(gamma, 1, 2))
    return BerwaldFit(residual <= tol, Tensor(gamma, (UP, DOWN, DOWN)), residual)


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------


def _offsets(points: np.ndarray, steps: np.ndarray, n: int):
    """Stencil for Richardson central differences: ±h, ±h/2 along each axis."""
    shifted = []
    for ax in range(n):
        for s in (1.0, -1.0, 0.5, -0.5):
            p = points.copy()
            p[:, ax] += s * steps[:, ax]
            shifted.append(p)
    return shifted


def _richardson(vals: np.ndarray, steps: np.ndarray, n: int) -> np.ndarray:
    """vals shape (n, 4, B, ...) → derivative (B, n, ...)."""
    extra = (slice(None),) + (None,) * (vals.ndim - 3)
    out = []
    for ax in range(n):
        h = steps[:, ax][extra]
        d_h = (vals[ax, 0] - vals[ax, 1]) / (2.0 * h)
        d_h2 = (vals[ax, 2] - vals[ax, 3]) / h
        out.append((4.0 * d_h2 - d_h) / 3.0)
    return np.stack(out, axis=1)


def ricci_scalar_batch(spec: MKropinaSpec, X, Y, x_step: float | None = None) -> np.ndarray:
    """Ric(x, y) = R^i_ij y^j with R^k_ij = δ_i N^k_j − δ_j N^k_i, δ_i = ∂_i − N^m_i ∂̄_m.

    ∂̄N is exact; ∂N uses Richardson central differences in x.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    x_step = X_STEP if x_step is None else x_step
    bsz, n = X.shape
    hx = x_step * (1.0 + np.abs(X))
    jet = _by_eps(spec, X, Y, "connection_jet")
    N = jet[:, 0]  # N[b, k, j] = N^k_j
    dyN = jet[:, 1:]  # [b, m, k, j] = ∂̄_m N^k_j
    N_x = nonlinear_connection_batch(spec, np.concatenate(_offsets(X, hx, n)), np.concatenate([Y] * (4 * n)))
    dxN = _richardson(N_x.reshape((n, 4, bsz, n, n)), hx, n)  # [b, i, k, j] = ∂_i N^k_j
    delta = dxN - np.einsum("bmi,bmkj->bikj", N, dyN)  # δ_i N^k_j
    R = np.einsum("bikj->bkij", delta) - np.einsum("bjki->bkij", delta)  # R[k, i, j] = δ_i N^k_j − δ_j N^k_i
    return np.einsum("biij,bj->b", R, Y)


@dataclass
class FinslerRicci:
    ric: float
    R: Tensor


def finsler_ricci_batch(spec: MKropinaSpec, X, Y, hessian_step: float | None = None):
    """Ric and R_ij = ½ ∂̄_i ∂̄_j Ric (central second differences, Richardson in the step)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    hessian_step = HESSIAN_STEP if hessian_step is None else hessian_step
    bsz, n = X.shape
    ynorm = np.linalg.norm(Y, axis=1)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    ys = [Y]
    for scale in (1.0, 0.5):
        h = hessian_step * scale * ynorm[:, None]
        for i in range(n):
            for s in (1.0, -1.0):
                p = Y.copy()
                p[:, i] += s * h[:, 0]
                ys.append(p)
        for i, j in pairs:
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                p = Y.copy()
                p[:, i] += si * h[:, 0]
                p[:, j] += sj * h[:, 0]
                ys.append(p)
    ric_all = ricci_scalar_batch(spec, np.concatenate([X] * len(ys)), np.concatenate(ys))
    ric_all = ric_all.reshape(len(ys), bsz)
    ric0 = ric_all[0]
    per_scale = 2 * n + 4 * len(pairs)
    hess = []
    for k, scale in enumerate((1.0, 0.5)):
        h = hessian_step * scale * ynorm
        block = ric_all[1 + k * per_scale: 1 + (k + 1) * per_scale]
        H = np.empty((bsz, n, n))
        for i in range(n):
            H[:, i, i] = (block[2 * i] - 2.0 * ric0 + block[2 * i + 1]) / h ** 2
        base = 2 * n
        for p, (i, j) in enumerate(pairs):
            pp, pm, mp, mm = block[base + 4 * p: base + 4 * p + 4]
            H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4.0 * h ** 2)
        hess.append(H)
    H = (4.0 * hess[1] - hess[0]) / 3.0
    return ric0, 0.5 * H


def finsler_ricci(spec: MKropinaSpec, tp: TangentPoint) -> FinslerRicci:
    ric, R = finsler_ricci_batch(spec, tp.x, tp.y)
    return FinslerRicci(float(ric[0]), Tensor(R[0], (DOWN, DOWN)))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _well_conditioned(spec, X, Y, cond_margin, stencil) -> np.ndarray:
    n = spec.n
    ynorm = np.linalg.norm(Y, axis=1)
    shifted = [Y]
    for i in range(n):
        for sgn in (1.0, -1.0):
            p = Y.copy()
            p[:, i] += sgn * stencil * ynorm
            shifted.append(p)
    for i, j in itertools.combinations(range(n), 2):
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            p = Y.copy()
            p[:, i] += si * stencil * ynorm
            p[:, j] += sj * stencil * ynorm
            shifted.append(p)
    XX = np.concatenate([X] * len(shifted))
    YY = np.concatenate(shifted)
    try:
        A, beta = _eps_groups(spec, XX, YY)
        a_scale = np.einsum("bij,bi,bj->b", np.abs(spec.metric.values(XX)), np.abs(YY), np.abs(YY))
        ok = (np.abs(A) >= 1e-2 * a_scale) & (beta > 0)
        g = np.zeros((len(XX), n, n))
        if np.any(ok):
            g[ok] = fundamental_tensor_batch(spec, XX[ok], YY[ok])
    except (InadmissibleError, ex.DomainError):
        return np.zeros(len(X), dtype=bool)
    sv = np.linalg.svd(g, compute_uv=False)
    good = ok & (sv[:, -1] >= cond_margin * np.maximum(sv[:, 0], 1e-300))
    sign = np.sign(np.linalg.det(g)).reshape(len(shifted), len(X))
    good = good.reshape(len(shifted), len(X))
    return np.all(good, axis=0) & np.all(sign == sign[0], axis=0)


def sample_tangent_points(spec: MKropinaSpec, box, count: int, rng: np.random.Generator,
                          cone_margin: float = 0.1, cond_margin: float = 1e-4, stencil: float = 0.1,
                          max_tries: int = 200):
    """Random admissible (x, y) with x uniform in ``box`` and y well inside the cone.

    g must stay well conditioned (s_min/s_max ≥ cond_margin, fixed sign of
    det g) at y, y ± stencil·|y| e_i and y ± stencil·|y| (e_i ± e_j), so that
    the vertical Hessian stencil never crosses a degeneracy of g.
    """
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    xs, ys = [], []
    for _ in range(max_tries):
        X = rng.uniform(lo, hi, size=(4 * count, spec.n))
        Y = rng.normal(size=(4 * count, spec.n))
        a = spec.metric.values(X)
        b = spec.oneform.values(X)
        beta = np.einsum("bi,bi->b", b, Y)
        Y = np.where(beta[:, None] < 0, -Y, Y)
        beta = np.abs(beta)
        A = np.einsum("bij,bi,bj->b", a, Y, Y)
        ynorm = np.linalg.norm(Y, axis=1)
        bnorm = np.linalg.norm(b, axis=1)
        a_scale = np.einsum("bij,bi,bj->b", np.abs(a), np.abs(Y), np.abs(Y))
        ok = (np.abs(A) >= cone_margin * a_scale) & (beta >= cone_margin * ynorm * bnorm)
        X, Y = X[ok], Y[ok]
        if len(X):
            keep = _well_conditioned(spec, X, Y, cond_margin, stencil)
            xs.extend(X[keep])
            ys.extend(Y[keep])
        if len(xs) >= count:
            break
    if len(xs) < count:
        raise RuntimeError("could not sample enough admissible tangent points")
    return np.array(xs[:count]), np.array(ys[:count])


__all__ = [
    "MKropinaSpec", "TangentPoint", "InadmissibleError", "SingularMatrixError",
    "F_value", "F_values", "fundamental_tensor", "fundamental_tensor_batch",
    "nonlinear_connection", "nonlinear_connection_batch", "berwald_detect", "BerwaldFit",
    "finsler_ricci", "finsler_ricci_batch", "ricci_scalar_batch", "FinslerRicci",
    "sample_tangent_points", "check_admissible",
]
