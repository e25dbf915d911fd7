"""Dense numeric tensors at a point: contraction, index gymnastics, symmetry parts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UP = "up"
DOWN = "down"

MAX_RANK = 4
SINGULAR_THRESHOLD = 1e-12


class SingularMatrixError(ValueError):
    pass


class ValenceError(ValueError):
    pass


def _normalize_valence(valence) -> tuple[str, ...]:
    if isinstance(valence, str):
        valence = [{"u": UP, "d": DOWN}[c] for c in valence]
    out = []
    for v in valence:
        if v in ("u", UP):
            out.append(UP)
        elif v in ("d", DOWN):
            out.append(DOWN)
        else:
            raise ValenceError(f"unknown slot kind {v!r}")
    return tuple(out)


@dataclass(frozen=True)
class Tensor:
    """Components of a tensor in a chart at one point.

    ``valence`` lists the slot kinds in index order, e.g. ``"udd"`` for
    Γ^k_ij stored as ``data[k, i, j]``.
    """

    data: np.ndarray
    valence: tuple[str, ...]

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        valence = _normalize_valence(self.valence)
        if data.ndim != len(valence):
            raise ValenceError(f"rank {data.ndim} data with {len(valence)} slot kinds")
        if data.ndim > MAX_RANK:
            raise ValenceError(f"rank {data.ndim} exceeds {MAX_RANK}")
        if data.ndim and len(set(data.shape)) != 1:
            raise ValenceError(f"non-cubic shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "valence", valence)

    @property
    def rank(self) -> int:
        return self.data.ndim

    @property
    def n(self) -> int:
        return self.data.shape[0] if self.data.ndim else 0

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __getitem__(self, idx):
        return self.data[idx]

    def __float__(self) -> float:
        if self.rank:
            raise TypeError("only rank-0 tensors convert to float")
        return float(self.data)

    def allclose(self, other, atol=1e-12, rtol=0.0) -> bool:
        return np.allclose(self.data, np.asarray(other), atol=atol, rtol=rtol)


def contract(t: Tensor, slot_a: int, slot_b: int) -> Tensor:
    """Trace over one upper and one lower slot (Einstein summation)."""
    if t.rank < 2:
        raise ValenceError("contraction needs rank >= 2")
    if slot_a == slot_b:
        raise ValenceError("cannot contract a slot with itself")
    if {t.valence[slot_a], t.valence[slot_b]} != {UP, DOWN}:
        raise ValenceError(
            f"slots {slot_a} and {slot_b} are both {t.valence[slot_a]}; need one up and one down"
        )
    data = np.trace(t.data, axis1=slot_a, axis2=slot_b)
    valence = tuple(v for i, v in enumerate(t.valence) if i not in (slot_a, slot_b))
    return Tensor(data, valence)


def raise_lower(t: Tensor, metric, inverse, slot: int) -> Tensor:
    """Flip the kind of ``slot`` using a_ij (to lower) or a^ij (to raise)."""
    metric = np.asarray(metric, dtype=float)
    inverse = np.asarray(inverse, dtype=float)
    check_nonsingular(metric)
    mat = metric if t.valence[slot] == UP else inverse
    data = np.moveaxis(np.tensordot(mat, t.data, axes=([1], [slot])), 0, slot)
    valence = list(t.valence)
    valence[slot] = DOWN if t.valence[slot] == UP else UP
    return Tensor(data, tuple(valence))


def _check_rank2(t: Tensor):
    if t.rank != 2:
        raise ValenceError("symmetrization needs a rank-2 tensor")
    if t.valence[0] != t.valence[1]:
        raise ValenceError("both slots must be of the same kind")


def sym(t: Tensor) -> Tensor:
    _check_rank2(t)
    return Tensor(0.5 * (t.data + t.data.T), t.valence)


def skew(t: Tensor) -> Tensor:
    _check_rank2(t)
    return Tensor(0.5 * (t.data - t.data.T), t.valence)


def identity(n: int) -> Tensor:
    return Tensor(np.eye(n), (UP, DOWN))


def _scaled_det(matrices: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(matrices), axis=(-2, -1))
    scale = np.where(scale > 0, scale, 1.0)
    sign, logdet = np.linalg.slogdet(matrices / scale[..., None, None])
    return sign * np.exp(logdet)


def check_nonsingular(matrices, threshold: float = SINGULAR_THRESHOLD) -> None:
    """Raise :class:`SingularMatrixError` if any matrix has |det| below threshold after scaling."""
    det = np.abs(_scaled_det(np.asarray(matrices, dtype=float)))
    if np.any(det < threshold):
        raise SingularMatrixError(f"singular matrix (scaled |det| = {float(np.min(det)):.3e})")


def inverse(matrices, threshold: float = SINGULAR_THRESHOLD) -> np.ndarray:
    """Inverse of one matrix or a stack of matrices, partial-pivot LU via LAPACK."""
    matrices = np.asarray(matrices, dtype=float)
    check_nonsingular(matrices, threshold)
    return np.linalg.inv(matrices)


def as_point(coords, n: int | None = None) -> np.ndarray:
    """Validate chart coordinates: a 1-D array of finite floats."""
    p = np.array(coords, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"a point must be 1-D, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise ValueError(f"expected {n} coordinates, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"non-finite coordinates {p}")
    return p


def as_points(coords, n: int | None = None) -> tuple[np.ndarray, bool]:
    """Return a (B, n) array and whether the input was a single point."""
    p = np.array(coords, dtype=float)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    if p.ndim != 2:
        raise ValueError(f"points must be 1-D or 2-D, got shape {p.shape}")
    if n is not None and p.shape[1] != n:
        raise ValueError(f"expected {n} coordinates, got {p.shape[1]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite coordinates")
    return p, single
