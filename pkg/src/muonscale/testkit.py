"""Independent oracles: dense grid minimization, log-log slope fits, reference minimizers.

These deliberately use the simplest possible method so they can check the
optimizers without sharing code paths with them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, OracleError


def grid_min(fn, lo: float, hi: float, n: int):
    """Evaluate ``fn`` at ``n`` uniform points of [lo, hi]; return (argmin, min).

    Ties resolve to the leftmost point.
    """
    if not lo < hi or n < 2:
        raise OracleError("grid_min needs lo < hi and n >= 2")
    xs = np.linspace(lo, hi, int(n))
    vals = np.array([fn(x) for x in xs], dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise OracleError("grid_min: non-finite function value")
    i = int(np.argmin(vals))
    return float(xs[i]), float(vals[i])


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def slope_fit(points) -> SlopeFit:
    """Least-squares line through (log T, log value)."""
    pts = [(float(t), float(v)) for t, v in points]
    if len(pts) < 3:
        raise OracleError("slope_fit needs at least 3 points")
    if any(t <= 0 or v <= 0 for t, v in pts):
        raise OracleError("slope_fit needs positive horizons and values")
    lt = np.log([t for t, _ in pts])
    lv = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(lt, lv, 1)
    resid = lv - (slope * lt + intercept)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return SlopeFit(float(slope), float(intercept), r2)


def reference_minimize(p, steps: int, x0=None, gtol: float = 0.0):
    """Plain gradient descent at step 1/L_frobenius.

    Stops early once the Euclidean gradient norm is at most ``gtol`` or the
    iterate stops changing. Raises :class:`OracleError` if f increases, which
    means the curvature constant is wrong.
    """
    if "convex" not in p.flags:
        raise ConfigError(f"reference_minimize needs a convex problem, got {p.name}")
    L = p.info.get("L_frobenius", p.L)
    x = (p.x0 if x0 is None else x0).copy()
    fx = p.f(x)
    for k in range(int(steps)):
        g = p.grad(x)
        gn = float(np.linalg.norm(g.flat()))
        if gn <= gtol:
            break
        x_new = x - g * (1.0 / L)
        f_new = p.f(x_new)
        if f_new > fx + 1e-12 * max(1.0, abs(fx)):
            raise OracleError(f"reference_minimize: f increased at step {k}; wrong L?")
        if x_new.allclose(x, rtol=0.0, atol=0.0):
            break
        x, fx = x_new, f_new
    return x, float(fx)


def _batched_block_norm(tag: str, stack: np.ndarray) -> np.ndarray:
    """Primal norm of each slice ``stack[i]`` for one block tag."""
    flat = stack.reshape(stack.shape[0], -1)
    if tag == "euclidean":
        return np.sqrt(np.einsum("ij,ij->i", flat, flat))
    if tag == "linf_sign":
        return np.max(np.abs(flat), axis=1)
    if stack.ndim != 3:
        raise OracleError("spectral block needs a matrix")
    return np.linalg.norm(stack, ord=2, axis=(1, 2))


def batched_primal_norm(tags, blocks_of_stacks) -> np.ndarray:
    """Max over blocks of the block primal norms, evaluated slice by slice."""
    return np.max([_batched_block_norm(t, s) for t, s in zip(tags, blocks_of_stacks)], axis=0)


def majorant_on_grid(state, g, L: float, cfg, d: float, f_x: float, geom, Rs) -> np.ndarray:
    """Evaluate the DF scalar majorant on many radii at once.

    Written from the term list directly, without the optimizer's evaluator, so
    it can serve as an oracle for the radius search.
    """
    Rs = np.asarray(Rs, dtype=np.float64)
    b = cfg.beta
    gs = sum(float(np.vdot(gb, sb)) for gb, sb in zip(g.blocks, state.s.blocks))
    gy = sum(float(np.vdot(gb, yb)) for gb, yb in zip(g.blocks, state.y.blocks))
    w_stacks, v_stacks = [], []
    for sb, yb in zip(state.s.blocks, state.y.blocks):
        r = Rs.reshape((-1,) + (1,) * sb.ndim)
        w_stacks.append(sb[None] * r - yb[None])
        v_stacks.append((1.0 - b) * yb[None] + b * r * sb[None])
    w = batched_primal_norm(geom.tags, w_stacks)
    v = batched_primal_norm(geom.tags, v_stacks)
    return (f_x + b * (Rs * gs - gy) + 0.5 * L * b * b * w * w + cfg.M * b * L * v * v
            + cfg.rho * L * b * b * w * w + 0.5 * cfg.lam * L * b * b * (Rs - d) ** 2)


def refined_grid_min(fn_vec, lo: float, hi: float, n: int = 100_000, refine_n: int = 1001,
                     levels: int = 4):
    """Grid minimizer for a convex scalar function, refined around the coarse argmin.

    ``fn_vec`` maps an array of points to an array of values. The first pass
    lays ``n`` points over [lo, hi]; each later pass lays ``refine_n`` points
    over the two cells neighbouring the current argmin. Returns (argmin, min).
    """
    if not lo < hi or n < 3 or refine_n < 3 or levels < 1:
        raise OracleError("refined_grid_min needs lo < hi, n >= 3, refine_n >= 3 and levels >= 1")
    a, b, m = float(lo), float(hi), int(n)
    best_x, best_v = a, np.inf
    for _ in range(levels):
        xs = np.linspace(a, b, m)
        vals = np.asarray(fn_vec(xs), dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise OracleError("refined_grid_min: non-finite function value")
        i = int(np.argmin(vals))
        if vals[i] < best_v:
            best_x, best_v = float(xs[i]), float(vals[i])
        h = xs[1] - xs[0]
        a, b, m = max(lo, best_x - h), min(hi, best_x + h), int(refine_n)
        if not a < b:
            break
    return best_x, best_v
