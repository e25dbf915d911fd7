"""Levi-Civita machinery and curvature of affine connections in one chart.

All batch functions take points as an array of shape (B, n) and return
arrays with a leading batch axis.  Index conventions for stored arrays:

    a[b, i, j]          a_ij
    da[b, m, i, j]      ∂_m a_ij
    dda[b, m, l, i, j]  ∂_m ∂_l a_ij
    gamma[b, k, i, j]   Γ^k_ij
    dgamma[b, m, k, i, j]  ∂_m Γ^k_ij
    riemann[b, k, l, i, j] R^k_lij = ∂_i Γ^k_jl − ∂_j Γ^k_il + Γ^k_im Γ^m_jl − Γ^k_jm Γ^m_il
    ricci[b, l, k]      R_lk = R^i_lik
"""

from __future__ import annotations

import itertools
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .tensor import DOWN, UP, Tensor, as_points, check_nonsingular, inverse

DEFAULT_FD_STEP = 1e-4
RICHARDSON_THRESHOLD = 1e-6


class ChartBoundaryError(ValueError):
    """A finite-difference stencil left the declared domain of the chart."""


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def fd_steps(points: np.ndarray, fd_step: float | None = None) -> np.ndarray:
    """Per-coordinate steps h_i = fd_step * (1 + |x_i|)."""
    base = DEFAULT_FD_STEP if fd_step is None else fd_step
    return base * (1.0 + np.abs(points))


def fd_gradient(fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray,
                fd_step: float | None = None, richardson: bool | str = "auto",
                threshold: float = RICHARDSON_THRESHOLD, domain=None,
                axes: Sequence[int] | None = None) -> np.ndarray:
    """Central-difference partial derivatives of a batched function.

    ``fn`` maps (B, n) points to (B, ...) values.  Returns (B, len(axes), ...).
    Steps h and h/2 are always evaluated; with ``richardson="auto"`` the
    extrapolated value (4 D(h/2) − D(h)) / 3 replaces D(h/2) wherever the
    two differ by more than ``threshold``.
    """
    points = np.asarray(points, dtype=float)
    bsz, n = points.shape
    axes = list(range(n)) if axes is None else list(axes)
    h = fd_steps(points, fd_step)
    stencil = []
    for ax in axes:
        for scale in (1.0, -1.0, 0.5, -0.5):
            shifted = points.copy()
            shifted[:, ax] += scale * h[:, ax]
            stencil.append(shifted)
    stencil = np.concatenate(stencil, axis=0)
    if domain is not None:
        lo, hi = domain
        if np.any(stencil < np.asarray(lo)) or np.any(stencil > np.asarray(hi)):
            raise ChartBoundaryError("finite-difference stencil leaves the declared domain")
    values = np.asarray(fn(stencil), dtype=float)
    values = values.reshape((len(axes), 4, bsz) + values.shape[1:])
    extra = (slice(None),) + (None,) * (values.ndim - 3)
    out = []
    for k, ax in enumerate(axes):
        hk = h[:, ax][extra]
        d_h = (values[k, 0] - values[k, 1]) / (2.0 * hk)
        d_h2 = (values[k, 2] - values[k, 3]) / hk
        rich = (4.0 * d_h2 - d_h) / 3.0
        if richardson is True:
            out.append(rich)
        elif richardson == "auto":
            resid = np.abs(d_h - d_h2)
            out.append(np.where(resid > threshold, rich, d_h2))
        else:
            out.append(d_h2)
    return np.stack(out, axis=1)


# ---------------------------------------------------------------------------
# Component fields defined by expressions
# ---------------------------------------------------------------------------


def _parse_component(value, coords, params) -> ex.Expr:
    if isinstance(value, ex.Expr):
        return value
    if isinstance(value, str):
        return ex.parse(value, coords, params)
    return ex.as_expr(value)


class _ExprField:
    """Shared machinery: compile component expressions and their derivatives."""

    exact = True

    def __init__(self, coords: Sequence[str], params: Mapping[str, float] | None):
        self.coords = tuple(coords)
        self.n = len(self.coords)
        self.params = dict(params or {})
        self._compiled: dict[int, ex.CompiledExprs] = {}
        self._diff = ex.Differentiator()

    def _base_exprs(self) -> list[ex.Expr]:
        raise NotImplementedError

    def _derivs(self, order: int) -> list[ex.Expr]:
        base = [ex.bind(e, self.params) for e in self._base_exprs()]
        if order == 0:
            return base
        if order == 1:
            return [self._diff(e, c) for c in self.coords for e in base]
        out = []
        for m, l in itertools.product(range(self.n), repeat=2):
            for e in base:
                out.append(self._diff(self._diff(e, self.coords[min(m, l)]), self.coords[max(m, l)]))
        return out

    def _compiled_jet(self, order: int) -> ex.CompiledExprs:
        if order not in self._compiled:
            exprs = []
            for k in range(order + 1):
                exprs.extend(self._derivs(k))
            self._compiled[order] = ex.compile_exprs(exprs, self.coords)
        return self._compiled[order]

    def _raw_jet(self, points: np.ndarray, order: int) -> list[np.ndarray]:
        pts, _ = as_points(points, self.n)
        fn = self._compiled_jet(order)
        vals = fn(*[pts[:, i] for i in range(self.n)])
        vals = np.stack(vals, axis=-1) if vals else np.zeros((len(pts), 0))
        nb = len(self._base_exprs())
        out = []
        start = 0
        for k in range(order + 1):
            count = nb * self.n ** k
            out.append(vals[:, start:start + count].reshape((len(pts),) + (self.n,) * k + (nb,)))
            start += count
        return out


class MetricSpec(_ExprField):
    """A metric a_ij(x) given by expressions in one chart.

    ``components`` is an n×n nested sequence (Expr, str or number) or a
    mapping {(i, j): value} with 0-based indices (missing entries are 0,
    the lower triangle mirrors the upper one).
    """

    def __init__(self, coords, components, params=None, signature_hint=None):
        super().__init__(coords, params)
        n = self.n
        names = list(self.params)
        grid = [[ex.ZERO] * n for _ in range(n)]
        if isinstance(components, Mapping):
            for (i, j), value in components.items():
                e = _parse_component(value, self.coords, names)
                grid[i][j] = e
                grid[j][i] = e
        else:
            rows = list(components)
            if len(rows) != n or any(len(r) != n for r in rows):
                raise ValueError(f"metric components must be {n}×{n}")
            for i in range(n):
                for j in range(n):
                    grid[i][j] = _parse_component(rows[i][j], self.coords, names)
        self.components = grid
        self.signature_hint = tuple(signature_hint) if signature_hint is not None else None
        self._asymmetric = [(i, j) for i in range(n) for j in range(i + 1, n)
                            if grid[i][j] != grid[j][i]]
        if self._asymmetric:
            self.check_symmetry()

    def _base_exprs(self):
        return [self.components[i][j] for i in range(self.n) for j in range(i, self.n)]

    def check_symmetry(self, points=None, tol=1e-12, seed=0):
        """Components that differ as trees must agree numerically at sample points."""
        if points is None:
            rng = np.random.default_rng(seed)
            points = rng.uniform(0.5, 1.5, size=(100, self.n))
        pts, _ = as_points(points, self.n)
        exprs = []
        for i, j in self._asymmetric:
            exprs += [ex.bind(self.components[i][j], self.params), ex.bind(self.components[j][i], self.params)]
        if not exprs:
            return
        vals = ex.compile_exprs(exprs, self.coords)(*[pts[:, k] for k in range(self.n)])
        for k, (i, j) in enumerate(self._asymmetric):
            a, b = vals[2 * k], vals[2 * k + 1]
            if np.max(np.abs(a - b) / (1.0 + np.abs(a))) > tol:
                raise ValueError(f"metric component ({i},{j}) differs from ({j},{i})")

    def _unpack(self, flat: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.zeros(flat.shape[:-1] + (n, n))
        k = 0
        for i in range(n):
            for j in range(i, n):
                out[..., i, j] = flat[..., k]
                out[..., j, i] = flat[..., k]
                k += 1
        return out

    def jet(self, points, order: int = 2) -> list[np.ndarray]:
        """[a, da, dda][:order+1] at the given points (exact derivatives)."""
        return [self._unpack(v) for v in self._raw_jet(points, order)]

    def values(self, points) -> np.ndarray:
        return self.jet(points, 0)[0]

    def to_strings(self) -> dict[tuple[int, int], str]:
        return {(i, j): ex.to_string(self.components[i][j])
                for i in range(self.n) for j in range(i, self.n)
                if not ex.is_zero(self.components[i][j])}


class OneFormSpec(_ExprField):
    """A 1-form b_i(x) given by expressions in one chart."""

    def __init__(self, coords, components, params=None):
        super().__init__(coords, params)
        names = list(self.params)
        if isinstance(components, Mapping):
            comps = [ex.ZERO] * self.n
            for i, value in components.items():
                comps[i] = _parse_component(value, self.coords, names)
        else:
            comps = [_parse_component(v, self.coords, names) for v in components]
        if len(comps) != self.n:
            raise ValueError(f"1-form needs {self.n} components")
        self.components = comps

    def _base_exprs(self):
        return list(self.components)

    def jet(self, points, order: int = 2) -> list[np.ndarray]:
        """[b, db, ddb][:order+1]; db[b, m, i] = ∂_m b_i."""
        return self._raw_jet(points, order)

    def values(self, points) -> np.ndarray:
        return self.jet(points, 0)[0]

    def to_strings(self) -> dict[int, str]:
        return {i: ex.to_string(e) for i, e in enumerate(self.components) if not ex.is_zero(e)}


class PointwiseField:
    """A tensor field known only through a batched callable; derivatives by FD."""

    exact = False

    def __init__(self, n: int, fn: Callable[[np.ndarray], np.ndarray], fd_step: float | None = None,
                 coords: Sequence[str] | None = None):
        self.n = n
        self.fn = fn
        self.fd_step = fd_step
        self.coords = tuple(coords) if coords else tuple(f"x{i}" for i in range(n))

    def values(self, points) -> np.ndarray:
        pts, _ = as_points(points, self.n)
        return np.asarray(self.fn(pts), dtype=float)

    def jet(self, points, order: int = 1) -> list[np.ndarray]:
        if order > 1:
            raise ValueError("pointwise fields provide at most first derivatives")
        pts, _ = as_points(points, self.n)
        out = [self.values(pts)]
        if order == 1:
            out.append(fd_gradient(self.fn, pts, self.fd_step, richardson=True))
        return out


class PointwiseMetric(PointwiseField):
    pass


class PointwiseOneForm(PointwiseField):
    pass


# ---------------------------------------------------------------------------
# Connections
# ---------------------------------------------------------------------------


def christoffel_from_jet(a: np.ndarray, da: np.ndarray, ainv: np.ndarray | None = None) -> np.ndarray:
    """Γ^k_ij = ½ a^kl (∂_i a_jl + ∂_j a_il − ∂_l a_ij), batched."""
    if ainv is None:
        ainv = inverse(a)
    low = 0.5 * (np.einsum("bijl->blij", da) + np.einsum("bjil->blij", da) - da)
    return np.einsum("bkl,blij->bkij", ainv, low)


def christoffel_derivative(a, da, dda, ainv=None) -> tuple[np.ndarray, np.ndarray]:
    """Γ and ∂_m Γ^k_ij from second-order metric jets."""
    if ainv is None:
        ainv = inverse(a)
    low = 0.5 * (np.einsum("bijl->blij", da) + np.einsum("bjil->blij", da) - da)
    dlow = 0.5 * (np.einsum("bmijl->bmlij", dda) + np.einsum("bmjil->bmlij", dda) - dda)
    dainv = -np.einsum("bkp,bmpq,bql->bmkl", ainv, da, ainv)
    gamma = np.einsum("bkl,blij->bkij", ainv, low)
    dgamma = np.einsum("bmkl,blij->bmkij", dainv, low) + np.einsum("bkl,bmlij->bmkij", ainv, dlow)
    return gamma, dgamma


class ConnectionField:
    """Torsion-free connection coefficients Γ^k_ij over a chart.

    ``gamma_fn`` maps (B, n) points to (B, n, n, n).  ``jet_fn``, when
    present, returns (Γ, ∂Γ) with exact derivatives ("symbolic" backing);
    otherwise derivatives are taken by central differences ("pointwise").
    """

    def __init__(self, n: int, gamma_fn, jet_fn=None, *, domain=None, torsion_free: bool = True,
                 coords: Sequence[str] | None = None, label: str = ""):
        self.n = n
        self.gamma_fn = gamma_fn
        self.jet_fn = jet_fn
        self.domain = domain
        self.torsion_free = torsion_free
        self.coords = tuple(coords) if coords else tuple(f"x{i}" for i in range(n))
        self.label = label

    @property
    def backing(self) -> str:
        return "symbolic" if self.jet_fn is not None else "pointwise"

    def gammas(self, points) -> np.ndarray:
        pts, _ = as_points(points, self.n)
        return np.asarray(self.gamma_fn(pts), dtype=float)

    def gamma(self, point) -> Tensor:
        return Tensor(self.gammas(point)[0], (UP, DOWN, DOWN))

    def jets(self, points, fd_step: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        pts, _ = as_points(points, self.n)
        if self.jet_fn is not None:
            return self.jet_fn(pts)
        g = self.gammas(pts)
        dg = fd_gradient(self.gamma_fn, pts, fd_step, domain=self.domain)
        return g, dg

    def pointwise(self) -> "ConnectionField":
        """The same coefficients with derivatives forced through finite differences."""
        return ConnectionField(self.n, self.gamma_fn, None, domain=self.domain,
                               torsion_free=self.torsion_free, coords=self.coords,
                               label=self.label + " (pointwise)")

    def torsion(self, points) -> float:
        g = self.gammas(points)
        return float(np.max(np.abs(g - np.swapaxes(g, -1, -2)))) if g.size else 0.0

    @classmethod
    def from_exprs(cls, exprs, coords, params=None) -> "ConnectionField":
        """Connection from an n×n×n nested list of expressions Γ^k_ij."""
        coords = tuple(coords)
        n = len(coords)
        names = list(params or {})
        flat = [_parse_component(exprs[k][i][j], coords, names)
                for k in range(n) for i in range(n) for j in range(n)]
        flat = [ex.bind(e, params or {}) for e in flat]
        diff = ex.Differentiator()
        dflat = [diff(e, c) for c in coords for e in flat]
        fn0 = ex.compile_exprs(flat, coords)
        fn1 = ex.compile_exprs(flat + dflat, coords)

        def gamma_fn(pts):
            vals = np.stack(fn0(*pts.T), axis=-1)
            return vals.reshape((len(pts), n, n, n))

        def jet_fn(pts):
            vals = np.stack(fn1(*pts.T), axis=-1)
            g = vals[:, : n ** 3].reshape((len(pts), n, n, n))
            dg = vals[:, n ** 3:].reshape((len(pts), n, n, n, n))
            return g, dg

        conn = cls(n, gamma_fn, jet_fn, coords=coords, label="expressions")
        if any(flat[(k * n + i) * n + j] != flat[(k * n + j) * n + i]
               for k in range(n) for i in range(n) for j in range(i + 1, n)):
            conn.torsion_free = False
        return conn


def christoffel(metric) -> ConnectionField:
    """Levi-Civita connection of ``metric``.

    For expression metrics the derivatives of Γ are exact (from second
    symbolic derivatives of the components); pointwise metrics give a
    pointwise connection.
    """
    n = metric.n

    def gamma_fn(pts):
        a, da = metric.jet(pts, 1)
        return christoffel_from_jet(a, da)

    jet_fn = None
    if metric.exact:
        def jet_fn(pts):
            a, da, dda = metric.jet(pts, 2)
            return christoffel_derivative(a, da, dda)

    return ConnectionField(n, gamma_fn, jet_fn, coords=metric.coords, label="Levi-Civita")


# ---------------------------------------------------------------------------
# Covariant derivative, curvature
# ---------------------------------------------------------------------------


def covariant_derivative_batch(gamma: np.ndarray, b: np.ndarray, db: np.ndarray) -> np.ndarray:
    """C_ij = ∇_j b_i = ∂_j b_i − Γ^k_ji b_k, batched (db[b, m, i] = ∂_m b_i)."""
    return np.einsum("bji->bij", db) - np.einsum("bkji,bk->bij", gamma, b)


def oneform_jet(b, points, order: int):
    if b.exact:
        return b.jet(points, order)
    return b.jet(points, min(order, 1))


def covariant_derivative_oneform(conn: ConnectionField, b, p) -> Tensor:
    """C_ij = ∇_j b_i at one point."""
    pts, _ = as_points(p, conn.n)
    bv, db = oneform_jet(b, pts, 1)
    return Tensor(covariant_derivative_batch(conn.gammas(pts), bv, db)[0], (DOWN, DOWN))


def riemann_from_jet(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """R^k_lij = ∂_i Γ^k_jl − ∂_j Γ^k_il + Γ^k_im Γ^m_jl − Γ^k_jm Γ^m_il."""
    d_term = np.einsum("bikjl->bklij", dgamma)
    quad = np.einsum("bkim,bmjl->bklij", gamma, gamma)
    return d_term - np.swapaxes(d_term, -1, -2) + quad - np.swapaxes(quad, -1, -2)


def ricci_from_riemann(riemann: np.ndarray) -> np.ndarray:
    """R_lk = R^i_lik."""
    return np.einsum("bilik->blk", riemann)


def riemann_batch(conn: ConnectionField, points, fd_step: float | None = None) -> np.ndarray:
    g, dg = conn.jets(points, fd_step)
    return riemann_from_jet(g, dg)


def ricci_batch(conn: ConnectionField, points, fd_step: float | None = None) -> np.ndarray:
    return ricci_from_riemann(riemann_batch(conn, points, fd_step))


def ricci_of_connection(conn: ConnectionField, p, fd_step: float | None = None) -> Tensor:
    """Affine Ricci tensor R_ij of ``conn`` at ``p``."""
    return Tensor(ricci_batch(conn, p, fd_step)[0], (DOWN, DOWN))


def riemann_of_connection(conn: ConnectionField, p, fd_step: float | None = None) -> Tensor:
    return Tensor(riemann_batch(conn, p, fd_step)[0], (UP, DOWN, DOWN, DOWN))


def is_parallel(conn: ConnectionField, b, sample_points, tol: float) -> bool:
    pts, _ = as_points(sample_points, conn.n)
    bv, db = oneform_jet(b, pts, 1)
    c = covariant_derivative_batch(conn.gammas(pts), bv, db)
    return bool(np.max(np.abs(c)) <= tol)


def norm_sq_batch(a: np.ndarray, b: np.ndarray, ainv: np.ndarray | None = None) -> np.ndarray:
    if ainv is None:
        ainv = inverse(a)
    return np.einsum("bij,bi,bj->b", ainv, b, b)


def norm_sq(metric, b, p) -> float:
    """Signed squared norm |b|² = a_ij b^i b^j = a^ij b_i b_j."""
    pts, _ = as_points(p, metric.n)
    return float(norm_sq_batch(metric.values(pts), b.values(pts))[0])


def metric_compatibility(metric, points) -> float:
    """max |∇_k a_ij| for the Levi-Civita connection of ``metric``."""
    pts, _ = as_points(points, metric.n)
    a, da = metric.jet(pts, 1)
    g = christoffel_from_jet(a, da)
    nabla = da - np.einsum("bpki,bpj->bkij", g, a) - np.einsum("bpkj,bip->bkij", g, a)
    return float(np.max(np.abs(nabla)))


def signature(a: np.ndarray) -> tuple[int, int]:
    """(negative, positive) eigenvalue counts of one symmetric matrix."""
    w = np.linalg.eigvalsh(a)
    return int(np.sum(w < 0)), int(np.sum(w > 0))


def is_lorentzian(a: np.ndarray) -> bool:
    neg, pos = signature(a)
    return neg + pos == a.shape[0] and min(neg, pos) == 1


# ---------------------------------------------------------------------------
# Coordinate changes
# ---------------------------------------------------------------------------


def pullback(metric: MetricSpec, new_coords: Sequence[str], old_of_new: Mapping[str, object],
             params: Mapping[str, float] | None = None) -> MetricSpec:
    """Components of ``metric`` in new coordinates X, given x^i(X) as expressions.

    a'_IJ(X) = a_ij(x(X)) ∂x^i/∂X^I ∂x^j/∂X^J, with exact Jacobians.
    """
    new_coords = tuple(new_coords)
    params = dict(params or {})
    mapping = {}
    for old in metric.coords:
        value = old_of_new[old]
        mapping[old] = ex.bind(_parse_component(value, new_coords, list(params)), params)
    diff = ex.Differentiator()
    jac = [[diff(mapping[old], new) for new in new_coords] for old in metric.coords]
    comps = [[ex.substitute(ex.bind(metric.components[i][j], metric.params), mapping)
              for j in range(metric.n)] for i in range(metric.n)]
    n = len(new_coords)
    out = {}
    for I in range(n):
        for J in range(I, n):
            terms = []
            for i in range(metric.n):
                for j in range(metric.n):
                    if ex.is_zero(comps[i][j]) or ex.is_zero(jac[i][I]) or ex.is_zero(jac[j][J]):
                        continue
                    terms.append(ex.mul(ex.mul(comps[i][j], jac[i][I]), jac[j][J]))
            out[(I, J)] = ex.total(terms)
    return MetricSpec(new_coords, out)


def check_metric(metric, points) -> np.ndarray:
    """Metric values at points; raises SingularMatrixError if degenerate anywhere."""
    a = metric.values(points)
    check_nonsingular(a)
    return a
