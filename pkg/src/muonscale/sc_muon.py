"""Scale-Calibrated Muon: the radius is a descent certificate divided by L.

    e_k = ||g_k - m_{k+1}||_*,   a_k = (||m_{k+1}||_* - e_k)_+,   eta_k = a_k / L
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import ConfigError, InvariantError
from .geometry import Geometry, Point, dual_norm
from .muon_base import Trace, ema_update, objective, tr_step

CERTIFIED_DESCENT = "Certified descent"
ERROR_RECURSION = "Momentum-error recursion"
LYAPUNOV_DESCENT = "Lyapunov descent"
GAP_TO_CERTIFICATE = "Gap-to-certificate relation"

DESCENT_SLACK = 1e-9
RECURSION_SLACK = 1e-10
GAP_SLACK = 1e-8

COLUMNS = ("k", "f", "gap", "grad_dual_norm", "eta", "e", "a", "halt_streak", "dist_star")


def sc_certificate(m_next: Point, g: Point, geom: Geometry):
    """Return (e, a): tracking error and certified descent rate of the momentum direction."""
    e = dual_norm(g - m_next, geom)
    a = max(0.0, dual_norm(m_next, geom) - e)
    return e, a


def lyapunov_weight(alpha: float) -> float:
    q = 1.0 - alpha
    gamma = alpha * (2.0 - alpha)
    return gamma / (16.0 * q * q)


def chi(alpha: float) -> float:
    q = 1.0 - alpha
    gamma = alpha * (2.0 - alpha)
    return min(3.0 / 8.0, gamma ** 3 / (16.0 * q * q))


def c_sc(alpha: float) -> float:
    return math.sqrt(5.0) + 2.0 * lyapunov_weight(alpha)


def sc_lyapunov(gap: float, e: float, alpha: float, L: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if L <= 0:
        raise ConfigError("L must be positive")
    return gap + lyapunov_weight(alpha) / L * e * e


def thm2_bound(L: float, D_lev: float, alpha: float, T: int) -> float:
    """Last-iterate gap bound C_sc^2 / chi * L * D_lev^2 / T."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    return c_sc(alpha) ** 2 / chi(alpha) * L * D_lev ** 2 / T


def sc_run(p, geom: Optional[Geometry] = None, alpha: float = 0.5, T: int = 100,
           x0: Optional[Point] = None, L: Optional[float] = None, strict: bool = True) -> Trace:
    """Run Scale-Calibrated Muon.

    With ``strict``, certified descent, the momentum-error recursion and the
    Lyapunov decrease are asserted after every step; a violation means the
    supplied ``L`` is not a valid smoothness constant or the LMO is broken.
    """
    geom = geom or p.geometry
    L = p.L if L is None else float(L)
    if T < 1:
        raise ConfigError("T must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not L > 0:
        raise ConfigError("L must be positive")
    x = (p.x0 if x0 is None else x0).copy()
    geom.check(x)
    trace = Trace("sc", COLUMNS, meta={"alpha": alpha, "L": L})
    weight, chi_a = lyapunov_weight(alpha), chi(alpha)

    def dist_star(z):
        return None if p.x_star is None else p.distance_to_star(z)

    g = p.grad(x)
    m = g
    streak = 0
    prev = None  # (f, e, a) of the previous step
    for k in range(T + 1):
        fx = objective(p, x, k)
        if k > 0:
            g = p.grad(x)
        m = ema_update(m, g, alpha)
        e, a = sc_certificate(m, g, geom)
        if prev is not None and strict:
            _assert_step(k - 1, prev, (fx, e, a), L, alpha, weight, chi_a)
        prev = (fx, e, a)
        if k == T:
            # m_{T+1} and e_T come from the gradient at x_T already needed for the final record
            trace.final = {"x": x, "f": fx, "gap": p.gap(fx), "grad_dual_norm": dual_norm(g, geom),
                           "e": e, "a": a, "dist_star": dist_star(x)}
            break
        eta = a / L
        streak = streak + 1 if a == 0.0 else 0
        trace.append(k=k, f=fx, gap=p.gap(fx), grad_dual_norm=dual_norm(g, geom), eta=eta,
                     e=e, a=a, halt_streak=streak, dist_star=dist_star(x))
        x = tr_step(x, m, eta, geom, step=k)
    return trace


def _assert_step(k, cur, nxt, L, alpha, weight, chi_a):
    f0, e0, a0 = cur
    f1, e1, _ = nxt
    margin = f0 - a0 * a0 / (2.0 * L) + DESCENT_SLACK - f1
    if margin < 0:
        raise InvariantError(CERTIFIED_DESCENT, k, margin)
    margin = (1.0 - alpha) * (e0 + a0) + RECURSION_SLACK - e1
    if margin < 0:
        raise InvariantError(ERROR_RECURSION, k, margin)
    # Lyapunov differences do not depend on f*, so f stands in for the gap
    phi0 = f0 + weight / L * e0 * e0
    phi1 = f1 + weight / L * e1 * e1
    margin = phi0 - chi_a / L * (a0 * a0 + e0 * e0) + DESCENT_SLACK - phi1
    if margin < 0:
        raise InvariantError(LYAPUNOV_DESCENT, k, margin)


def _series(trace: Trace, name: str) -> np.ndarray:
    return np.append(trace.column(name), trace.final[name])


def lemma_margins(trace: Trace, L: float, alpha: float) -> dict:
    """Per-step slack of the three descent lemmas (negative = violated)."""
    f, e, a = _series(trace, "f"), _series(trace, "e"), _series(trace, "a")
    w, c = lyapunov_weight(alpha), chi(alpha)
    phi = f + w / L * e ** 2
    return {
        CERTIFIED_DESCENT: f[:-1] - a[:-1] ** 2 / (2 * L) + DESCENT_SLACK - f[1:],
        ERROR_RECURSION: (1 - alpha) * (e[:-1] + a[:-1]) + RECURSION_SLACK - e[1:],
        LYAPUNOV_DESCENT: phi[:-1] - c / L * (a[:-1] ** 2 + e[:-1] ** 2) + DESCENT_SLACK - phi[1:],
    }


def gap_certificate_margins(trace: Trace) -> np.ndarray:
    """D_obs * (a_k + 2 e_k) - gap_k with D_obs the largest observed ||x_k - x*||."""
    gap = _series(trace, "gap")
    d_obs = float(np.max(_series(trace, "dist_star")))
    return d_obs * (_series(trace, "a") + 2 * _series(trace, "e")) + GAP_SLACK - gap
