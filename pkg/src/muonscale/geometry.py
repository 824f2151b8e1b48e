"""Norm geometries over block-structured points.

A :class:`Point` is an ordered collection of named dense blocks (vectors or
matrices). A :class:`Geometry` assigns one norm tag to each block:

=============  ===================  ==================  =====================
tag            primal block norm    dual block norm     ascent LMO
=============  ===================  ==================  =====================
``euclidean``  l2 / Frobenius       l2 / Frobenius      m / ||m||
``linf_sign``  max |entry|          sum |entry|         sign(m)
``spectral``   largest sing. value  nuclear norm        U V^T (polar factor)
=============  ===================  ==================  =====================

Blocks are combined with the max-over-blocks primal norm, so the dual norm is
the sum of block dual norms and the LMO factorizes blockwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateInputError

TAGS = ("euclidean", "linf_sign", "spectral")

NS_COEFFS = (3.4445, -4.7750, 2.0315)
SV_CUTOFF = 1e-12


class Point:
    """Ordered named blocks with blockwise, shape-preserving arithmetic."""

    __slots__ = ("names", "blocks")

    def __init__(self, blocks: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]):
        items = list(blocks.items()) if isinstance(blocks, Mapping) else list(blocks)
        names = tuple(name for name, _ in items)
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate block names in {names}")
        arrays = []
        for name, a in items:
            a = np.array(a, dtype=np.float64)
            if a.ndim not in (1, 2):
                raise ConfigError(f"block {name!r} has rank {a.ndim}; expected 1 or 2")
            arrays.append(a)
        self.names = names
        self.blocks = tuple(arrays)

    @classmethod
    def single(cls, a, name="x") -> "Point":
        return cls([(name, np.atleast_1d(np.asarray(a, dtype=np.float64)))])

    @property
    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(b.shape for b in self.blocks)

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[self.names.index(name)]

    def __len__(self):
        return len(self.blocks)

    def __repr__(self):
        inner_ = ", ".join(f"{n}={b.tolist()!r}" for n, b in zip(self.names, self.blocks))
        return f"Point({inner_})"

    def _check_compatible(self, other: "Point"):
        if not isinstance(other, Point):
            raise TypeError(f"expected Point, got {type(other).__name__}")
        if other.names != self.names or other.shapes != self.shapes:
            raise ConfigError(
                f"incompatible points: {list(zip(self.names, self.shapes))} vs "
                f"{list(zip(other.names, other.shapes))}"
            )

    def _new(self, arrays) -> "Point":
        p = object.__new__(Point)
        p.names = self.names
        p.blocks = tuple(arrays)
        return p

    def __add__(self, other: "Point") -> "Point":
        self._check_compatible(other)
        return self._new(a + b for a, b in zip(self.blocks, other.blocks))

    def __sub__(self, other: "Point") -> "Point":
        self._check_compatible(other)
        return self._new(a - b for a, b in zip(self.blocks, other.blocks))

    def __mul__(self, c: float) -> "Point":
        c = float(c)
        return self._new(c * a for a in self.blocks)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "Point":
        return self * (1.0 / float(c))

    def __neg__(self) -> "Point":
        return self._new(-a for a in self.blocks)

    def copy(self) -> "Point":
        return self._new(a.copy() for a in self.blocks)

    def zeros_like(self) -> "Point":
        return self._new(np.zeros_like(a) for a in self.blocks)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.blocks])

    def unflat(self, v: np.ndarray) -> "Point":
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.size:
            raise ConfigError(f"flat vector has {v.size} entries, point has {self.size}")
        out, i = [], 0
        for a in self.blocks:
            out.append(v[i:i + a.size].reshape(a.shape).copy())
            i += a.size
        return self._new(out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.blocks)

    def allclose(self, other: "Point", **kw) -> bool:
        self._check_compatible(other)
        return all(np.allclose(a, b, **kw) for a, b in zip(self.blocks, other.blocks))


def inner(a: Point, b: Point) -> float:
    """Frobenius pairing summed over blocks."""
    a._check_compatible(b)
    return float(sum(np.vdot(x, y) for x, y in zip(a.blocks, b.blocks)))


@dataclass(frozen=True)
class Geometry:
    """Per-block norm tags; blocks are combined by the max-over-blocks norm."""

    tags: tuple[str, ...]

    def __post_init__(self):
        tags = tuple(self.tags)
        object.__setattr__(self, "tags", tags)
        if not tags:
            raise ConfigError("geometry needs at least one block")
        for t in tags:
            if t not in TAGS:
                raise ConfigError(f"unknown norm tag {t!r}; expected one of {TAGS}")

    @classmethod
    def of(cls, tag: str, n_blocks: int = 1) -> "Geometry":
        return cls((tag,) * n_blocks)

    def check(self, p: Point):
        if len(p) != len(self.tags):
            raise ConfigError(f"point has {len(p)} blocks, geometry has {len(self.tags)}")
        for name, tag, a in zip(p.names, self.tags, p.blocks):
            if tag == "spectral" and a.ndim != 2:
                raise ConfigError(f"spectral block {name!r} must be a matrix, got shape {a.shape}")

    @property
    def inner_product_norm(self) -> bool:
        """True when the product norm itself comes from an inner product."""
        return self.tags == ("euclidean",)


# ---------------------------------------------------------------------------
# block-level norms

def _l2(a: np.ndarray) -> float:
    # rescale first so squares of tiny entries do not underflow into subnormals
    s = float(np.max(np.abs(a))) if a.size else 0.0
    if s == 0.0 or not np.isfinite(s):
        return s
    return s * float(np.linalg.norm(a / s))


def _block_primal(tag: str, a: np.ndarray) -> float:
    if tag == "euclidean":
        return _l2(a)
    if tag == "linf_sign":
        return float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.linalg.norm(a, 2))


def _block_dual(tag: str, a: np.ndarray) -> float:
    if tag == "euclidean":
        return _l2(a)
    if tag == "linf_sign":
        return float(np.sum(np.abs(a)))
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def _block_lmo(tag: str, a: np.ndarray) -> np.ndarray:
    if tag == "euclidean":
        n = _l2(a)
        return a / n if n > 0 else np.zeros_like(a)
    if tag == "linf_sign":
        # np.sign maps zeros to 0, the minimal-norm tie-break
        return np.sign(a)
    return orthogonalize(a, mode="exact")


def primal_norm(x: Point, geom: Geometry) -> float:
    geom.check(x)
    return max(_block_primal(t, a) for t, a in zip(geom.tags, x.blocks))


def dual_norm(m: Point, geom: Geometry) -> float:
    geom.check(m)
    return float(sum(_block_dual(t, a) for t, a in zip(geom.tags, m.blocks)))


def lmo_ascent(m: Point, geom: Geometry) -> Point:
    """Unit-ball maximizer ``u`` of <m, u>; satisfies <m, u> = dual_norm(m)."""
    geom.check(m)
    return m._new(_block_lmo(t, a) for t, a in zip(geom.tags, m.blocks))


def lmo_descent(m: Point, geom: Geometry) -> Point:
    return -lmo_ascent(m, geom)


def orthogonalize(A, mode: str = "exact", iters: int = 5) -> np.ndarray:
    """Polar factor of ``A``: exact (reduced SVD) or Newton-Schulz approximation."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ConfigError(f"orthogonalize expects a matrix, got shape {A.shape}")
    if mode == "exact":
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return np.zeros_like(A)
        keep = s > SV_CUTOFF * s[0]
        return U[:, keep] @ Vt[keep, :]
    if mode == "newton_schulz":
        return _newton_schulz(A, iters)
    raise ConfigError(f"unknown orthogonalize mode {mode!r}")


def _newton_schulz(A: np.ndarray, iters: int) -> np.ndarray:
    norm = np.linalg.norm(A)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateInputError("Newton-Schulz needs a nonzero finite matrix")
    a, b, c = NS_COEFFS
    X = A / norm
    transposed = X.shape[0] > X.shape[1]
    if transposed:
        X = X.T
    for _ in range(iters):
        S = X @ X.T
        X = a * X + (b * S + c * S @ S) @ X
    return X.T if transposed else X


def smoothness_factor(geom: Geometry, shapes: Sequence[tuple[int, ...]]) -> float:
    """Factor ``c`` with ``L_geom <= c * L_frobenius`` for any Frobenius-smooth f.

    Per block, kappa is 1 (euclidean), the entry count (linf_sign) or the
    smaller matrix side (spectral); the product geometry gets sum(kappa).
    """
    if len(shapes) != len(geom.tags):
        raise ConfigError("shape list does not match geometry")
    total = 0
    for tag, shape in zip(geom.tags, shapes):
        if tag == "euclidean":
            total += 1
        elif tag == "linf_sign":
            total += int(np.prod(shape))
        else:
            if len(shape) != 2:
                raise ConfigError(f"spectral block needs a matrix shape, got {shape}")
            total += min(shape)
    return float(total)
