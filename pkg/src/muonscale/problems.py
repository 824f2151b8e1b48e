"""Test objectives with analytic gradients and geometry-aware smoothness constants."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import ConfigError, OracleError
from .geometry import Geometry, Point, dual_norm, inner, primal_norm, smoothness_factor

PROBLEMS = ("quad_iso", "least_squares", "logistic", "ripple", "star_1d")

# measured smoothness constants get this multiplicative margin
SAFETY = 1.05


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    geometry: Geometry
    x0: Point
    f: Callable[[Point], float]
    grad: Callable[[Point], Point]
    L: float
    x_star: Optional[Point] = None
    f_star: Optional[float] = None
    flags: frozenset = frozenset()
    info: dict = field(default_factory=dict, compare=False)

    def gap(self, fx: float) -> Optional[float]:
        return None if self.f_star is None else fx - self.f_star

    def distance_to_star(self, x: Point) -> float:
        if self.x_star is None:
            raise ConfigError(f"{self.name} has no known minimizer")
        return primal_norm(x - self.x_star, self.geometry)


def _as_geometry(geometry) -> Geometry:
    if isinstance(geometry, Geometry):
        return geometry
    return Geometry.of(geometry)


def _wrap(fn_flat, shape):
    """Lift a function of a flat array to a function of single-block points."""
    def f(p: Point):
        return fn_flat(p.blocks[0].ravel())
    return f


def _wrap_grad(grad_flat, shape):
    def g(p: Point):
        return Point.single(grad_flat(p.blocks[0].ravel()).reshape(shape))
    return g


def power_iteration(H: np.ndarray, rtol: float = 1e-10, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    v = np.random.default_rng(seed).standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def second_difference_scan(f1d, lo: float, hi: float, n: int = 400_001, h: float = 1e-3) -> float:
    """Largest |f''| on [lo, hi] estimated by central second differences."""
    x = np.linspace(lo, hi, n)
    d2 = (f1d(x + h) - 2.0 * f1d(x) + f1d(x - h)) / (h * h)
    return float(np.max(np.abs(d2)))


def _star_1d_scalar(x):
    ax = np.abs(x)
    return ax * (1.0 - np.exp(-ax))


def make_problem(name: str, dim: int = 2, seed: int = 0, *, geometry="euclidean",
                 L: Optional[float] = None) -> ProblemSpec:
    """Instantiate a named objective on a single block ``x``.

    Vector geometries use shape ``(dim,)``; the spectral geometry uses a square
    ``(dim, dim)`` matrix variable. ``L`` is only configurable for ``quad_iso``
    and is the Frobenius curvature there; the declared ``ProblemSpec.L`` is
    always the constant in the requested geometry.
    """
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; expected one of {PROBLEMS}")
    if int(dim) < 1:
        raise ConfigError("dim must be >= 1")
    dim = int(dim)
    geom = _as_geometry(geometry)
    if len(geom.tags) != 1:
        raise ConfigError("built-in problems have a single block")
    shape = (dim, dim) if geom.tags[0] == "spectral" else (dim,)
    factor = smoothness_factor(geom, [shape])
    rng = np.random.default_rng(seed)
    n = int(np.prod(shape))

    if L is not None and name != "quad_iso":
        raise ConfigError("L is only configurable for quad_iso")

    if name == "quad_iso":
        c = 1.0 if L is None else float(L)
        if c <= 0:
            raise ConfigError("L must be positive")
        f = lambda v: 0.5 * c * float(v @ v)
        g = lambda v: c * v
        return ProblemSpec(
            name, geom, Point.single(np.ones(shape)), _wrap(f, shape), _wrap_grad(g, shape),
            L=c * factor, x_star=Point.single(np.zeros(shape)), f_star=0.0,
            flags=frozenset({"convex"}), info={"L_frobenius": c},
        )

    if name == "least_squares":
        # overdetermined design keeps A^T A well conditioned and x* unique
        k = 4 * dim
        A = rng.standard_normal((k, dim)) / np.sqrt(k)
        X_star = rng.standard_normal(shape)
        B = A @ X_star
        L_f = power_iteration(A.T @ A, seed=seed)

        def f(v):
            r = A @ v.reshape(shape) - B
            return 0.5 * float(np.vdot(r, r))

        def g(v):
            return (A.T @ (A @ v.reshape(shape) - B)).ravel()

        return ProblemSpec(
            name, geom, Point.single(np.zeros(shape)), _wrap(f, shape), _wrap_grad(g, shape),
            L=L_f * factor, x_star=Point.single(X_star), f_star=0.0,
            flags=frozenset({"convex"}), info={"L_frobenius": L_f, "A": A},
        )

    if name == "logistic":
        if geom.tags[0] == "spectral":
            raise ConfigError("logistic is vector-valued; use euclidean or linf_sign")
        X, y = logistic_data(dim, seed)
        L_f = power_iteration(X.T @ X, seed=seed) / (4.0 * X.shape[0])
        f, g = logistic_loss(X, y)
        # no closed-form minimizer: long gradient-descent reference run
        x_ref, f_ref = _logistic_reference(dim, seed)
        return ProblemSpec(
            name, geom, Point.single(np.zeros(shape)), _wrap(f, shape), _wrap_grad(g, shape),
            L=L_f * factor, x_star=Point.single(x_ref), f_star=f_ref,
            flags=frozenset({"convex"}), info={"L_frobenius": L_f},
        )

    if name == "ripple":
        f = lambda v: float(np.sum(0.5 * v * v + np.sin(v) ** 2))
        g = lambda v: v + np.sin(2.0 * v)
        return ProblemSpec(
            name, geom, Point.single(2.0 * rng.standard_normal(shape)), _wrap(f, shape),
            _wrap_grad(g, shape), L=3.0 * factor, x_star=Point.single(np.zeros(shape)),
            f_star=0.0, flags=frozenset({"nonconvex"}), info={"L_frobenius": 3.0},
        )

    # star_1d
    L_f = SAFETY * _star_1d_curvature()
    f = lambda v: float(np.sum(_star_1d_scalar(v)))

    def g(v):
        av = np.abs(v)
        e = np.exp(-av)
        return np.sign(v) * (1.0 - e + av * e)

    spec = ProblemSpec(
        name, geom, Point.single(3.0 * rng.standard_normal(shape)), _wrap(f, shape),
        _wrap_grad(g, shape), L=L_f * factor, x_star=Point.single(np.zeros(shape)),
        f_star=0.0, flags=frozenset({"nonconvex"}), info={"L_frobenius": L_f},
    )
    ok, worst = star_convexity_check(spec, n_samples=2000, radius=20.0, seed=seed)
    if not ok:
        raise OracleError(f"star_1d failed the star-convexity screen (margin {worst:.3e})")
    return ProblemSpec(spec.name, geom, spec.x0, spec.f, spec.grad, spec.L, spec.x_star,
                       spec.f_star, frozenset({"nonconvex", "star_convex_verified"}), spec.info)


@functools.lru_cache(maxsize=None)
def _star_1d_curvature() -> float:
    return second_difference_scan(_star_1d_scalar, -20.0, 20.0)


def logistic_data(dim: int, seed: int, n_samples: Optional[int] = None):
    """Gaussian features with noisy linear labels in {-1, +1}; 10% flipped so a minimizer exists."""
    rng = np.random.default_rng(10_000 + seed)
    n_samples = n_samples or max(40, 10 * dim)
    X = rng.standard_normal((n_samples, dim))
    w = rng.standard_normal(dim)
    y = np.sign(X @ w + 0.5 * rng.standard_normal(n_samples))
    y[y == 0] = 1.0
    flip = rng.random(n_samples) < 0.1
    y[flip] *= -1.0
    return X, y


def logistic_loss(X: np.ndarray, y: np.ndarray):
    n = X.shape[0]

    def f(w):
        return float(np.mean(np.logaddexp(0.0, -y * (X @ w))))

    def g(w):
        return -(X.T @ (y * expit(-y * (X @ w)))) / n

    return f, g


@functools.lru_cache(maxsize=None)
def _logistic_reference(dim: int, seed: int):
    from .testkit import reference_minimize

    X, y = logistic_data(dim, seed)
    L_f = power_iteration(X.T @ X, seed=seed) / (4.0 * X.shape[0])
    f, g = logistic_loss(X, y)
    shape = (dim,)
    p = ProblemSpec("logistic", Geometry.of("euclidean"), Point.single(np.zeros(shape)),
                    _wrap(f, shape), _wrap_grad(g, shape), L=L_f, flags=frozenset({"convex"}))
    x_ref, f_ref = reference_minimize(p, steps=1_000_000, gtol=1e-13)
    return x_ref.blocks[0].copy(), f_ref


def _sample_ball(p: ProblemSpec, rng, radius: float) -> Point:
    v = p.x0.unflat(rng.standard_normal(p.x0.size))
    nv = primal_norm(v, p.geometry)
    t = radius * rng.random()
    return p.x_star + v * (t / nv)


def star_convexity_check(p: ProblemSpec, n_samples: int = 1000, radius: float = 1.0,
                         seed: int = 0, tol: float = 1e-8):
    """Screen f(x) - f* <= <grad f(x), x - x*> on random points near x*.

    Returns ``(passed, worst_margin)`` where the margin is
    ``<grad f(x), x - x*> - (f(x) - f*)`` minimized over the samples.
    """
    if p.x_star is None:
        raise ConfigError(f"{p.name}: star-convexity screen needs x_star")
    f_star = p.f(p.x_star) if p.f_star is None else p.f_star
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_samples):
        x = _sample_ball(p, rng, radius)
        margin = inner(p.grad(x), x - p.x_star) - (p.f(x) - f_star)
        worst = min(worst, margin)
    return bool(worst >= -tol), float(worst)


def finite_diff_check(p: ProblemSpec, x: Point, h: float = 1e-5) -> float:
    """Max over coordinates of |central difference - grad| / max(1, |grad|)."""
    if h <= 0:
        raise ConfigError("h must be positive")
    v = x.flat()
    gv = p.grad(x).flat()
    worst = 0.0
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        fd = (p.f(x.unflat(v + e)) - p.f(x.unflat(v - e))) / (2.0 * h)
        worst = max(worst, abs(fd - gv[i]) / max(1.0, abs(gv[i])))
    return float(worst)


def smoothness_margins(p: ProblemSpec, n_pairs: int = 200, seed: int = 0, scale: float = 3.0):
    """Worst value of dual(grad(y)-grad(x)) / (L * primal(y-x)) over random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        x = p.x0.unflat(scale * rng.standard_normal(p.x0.size))
        y = p.x0.unflat(scale * rng.standard_normal(p.x0.size))
        num = dual_norm(p.grad(y) - p.grad(x), p.geometry)
        den = p.L * primal_norm(y - x, p.geometry)
        if den > 0:
            worst = max(worst, num / den)
    return float(worst)
