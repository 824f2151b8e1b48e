"""Distance-Adaptive Muon: the radius follows the distance explored by the trajectory.

    r_{k+1} = max(r_k, ||x_k - x_0||),   eta_k = r_{k+1} / sqrt(k + 1)
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import ConfigError, InvariantError
from .geometry import Geometry, Point, dual_norm, primal_norm
from .muon_base import Trace, ema_update, objective, tr_step

MOMENTUM_TRACKING = "Momentum tracking"
TRACKING_SLACK = 1e-8

COLUMNS = ("k", "f", "gap", "grad_dual_norm", "eta", "r_bar", "r_bar_prev", "dist0", "mom_err")


def da_radius_update(r_bar: float, x: Point, x0: Point, geom: Geometry) -> float:
    if r_bar <= 0:
        raise ConfigError("r_bar must be positive")
    return max(r_bar, primal_norm(x - x0, geom))


def default_radius(x0: Point, geom: Geometry) -> float:
    return 0.1 * max(1.0, primal_norm(x0, geom))


def tracking_bound(L: float, r_bar_prev: float, alpha: float, k: int) -> float:
    """Upper bound on ||m_{k+1} - grad f(x_k)||_* under the warm start."""
    q = 1.0 - alpha
    return L * r_bar_prev * (q ** (k / 2.0) / alpha + math.sqrt(2.0) * q / (alpha * math.sqrt(k + 2.0)))


def da_run(p, geom: Optional[Geometry] = None, r: Optional[float] = None, alpha: float = 0.5,
           T: int = 100, x0: Optional[Point] = None, eta_max: Optional[float] = None,
           strict: bool = True) -> Trace:
    """Run Distance-Adaptive Muon for ``T`` steps.

    ``eta_max`` clamps the radius after the rule is applied. The clamp is an
    experimental knob and not part of the analyzed method, although the
    momentum-tracking bound still holds under it since steps only shrink.
    With ``strict`` the momentum-tracking inequality is asserted every step.
    """
    geom = geom or p.geometry
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    x0 = (p.x0 if x0 is None else x0).copy()
    geom.check(x0)
    if r is None:
        r = default_radius(x0, geom)
    if r <= 0:
        raise ConfigError("initial radius r must be positive")
    if eta_max is not None and eta_max <= 0:
        raise ConfigError("eta_max must be positive")

    trace = Trace("da", COLUMNS, meta={"r": r, "alpha": alpha, "eta_max": eta_max, "L": p.L})
    x = x0.copy()
    g = p.grad(x)
    m = g
    r_bar = r
    for k in range(T):
        fx = objective(p, x, k)
        if k > 0:
            g = p.grad(x)
        dist = primal_norm(x - x0, geom)
        r_prev, r_bar = r_bar, max(r_bar, dist)
        eta = r_bar / math.sqrt(k + 1)
        if eta_max is not None:
            eta = min(eta, eta_max)
        m = ema_update(m, g, alpha)
        mom_err = dual_norm(m - g, geom)
        if strict:
            margin = tracking_bound(p.L, r_prev, alpha, k) + TRACKING_SLACK - mom_err
            if margin < 0:
                raise InvariantError(MOMENTUM_TRACKING, k, margin)
        trace.append(k=k, f=fx, gap=p.gap(fx), grad_dual_norm=dual_norm(g, geom), eta=eta,
                     r_bar=r_bar, r_bar_prev=r_prev, dist0=dist, mom_err=mom_err)
        x = tr_step(x, m, eta, geom, step=k)
    fx = objective(p, x, T)
    dist = primal_norm(x - x0, geom)
    trace.final = {"x": x, "f": fx, "gap": p.gap(fx), "grad_dual_norm": dual_norm(p.grad(x), geom),
                   "dist0": dist, "r_bar": max(r_bar, dist)}
    return trace


def momentum_tracking_margins(trace: Trace, L: float, alpha: float) -> np.ndarray:
    """bound - observed for every step (negative entries are violations)."""
    rp = trace.column("r_bar_prev")
    err = trace.column("mom_err")
    bounds = np.array([tracking_bound(L, rp[k], alpha, k) for k in range(len(trace))])
    return bounds + TRACKING_SLACK - err


def min_next_grad(trace: Trace) -> float:
    """min over k in [0, T-1] of ||grad f(x_{k+1})||_*."""
    g = trace.column("grad_dual_norm")[1:]
    return float(min(np.min(g, initial=np.inf), trace.final["grad_dual_norm"]))


def realized_radius(trace: Trace) -> float:
    """Smallest D >= r bounding ||x_k - x_0|| for k = 0..T."""
    return float(max(trace.meta["r"], np.max(trace.column("dist0")), trace.final["dist0"]))


def c_alpha(alpha: float, T: int) -> float:
    q = 1.0 - alpha
    A = (1.0 / alpha) * (1.0 + (1.0 / math.sqrt(q)) * math.sqrt(2.0 * math.pi / math.log(1.0 / q)))
    return 2.0 * A + (3.5 + 2.0 * math.sqrt(2.0) * q / alpha) * (1.0 + math.log(T))


def thm1_bound(f0_gap: float, r: float, D: float, L: float, alpha: float, T: int) -> float:
    """Stationarity bound for min_k ||grad f(x_{k+1})||_* after T steps."""
    if not r > 0:
        raise ConfigError("r must be positive")
    if D < r:
        raise ConfigError(f"the trajectory bound D={D} must be at least r={r}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if T < 1:
        raise ConfigError("T must be >= 1")
    sT = math.sqrt(T)
    first = math.sqrt(2.0) * f0_gap / (r * sT)
    second = 2.0 * L * c_alpha(alpha, T) * D / sT * (D / r) ** (2.0 / T) * math.log(math.e * D / r)
    return first + second
