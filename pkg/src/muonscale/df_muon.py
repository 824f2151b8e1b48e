"""Distance-Free Muon.

Each step moves along the recentered ray

    z_k(R) = x_0 + (1 - beta) (x_k - x_0) + beta * R * s_k,

where ``s_k`` is the LMO descent direction of the momentum, and picks ``R`` by
minimizing a convex regularized smoothness majorant ``Q_k``. A scalar lower
certificate ``d_k`` on ||x_0 - x*|| anchors the regularizer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, InvariantError
from .geometry import Geometry, Point, dual_norm, inner, lmo_descent, primal_norm
from .muon_base import Trace, ema_update, objective, tr_step

D_CERT = "Validity of the D-certificate"
MAJORIZATION = "Smoothness majorization"
ONE_STEP = "One-step majorized inequality"

CERT_SLACK = 1e-8
MAJOR_SLACK = 1e-9
FIT_RTOL = 1e-8
OMEGA_RULES = ("unit", "normalized")

COLUMNS = ("k", "f", "gap", "grad_dual_norm", "R", "d", "eta", "step_norm", "y_norm", "e_norm",
           "model")


@dataclass(frozen=True)
class DFConfig:
    """Parameters of the scalar search. ``beta=None`` means: set from the horizon."""

    alpha: float = 0.9
    beta: Optional[float] = None
    rho: float = 1.0
    lam: float = 1.0
    M: float = 6.0
    omega: str = "unit"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.rho <= 0 or self.lam <= 0 or self.M <= 0:
            raise ConfigError("rho, lambda and M must be positive")
        if self.M < 2.0 * (1.0 + 2.0 * self.rho):
            raise ConfigError(f"M={self.M} must be at least 2(1 + 2 rho) = {2 * (1 + 2 * self.rho)}")
        if self.omega not in OMEGA_RULES:
            raise ConfigError(f"omega rule must be one of {OMEGA_RULES}")
        if self.beta is not None:
            if not 0.0 < self.beta < 1.0:
                raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
            if not self.alpha > self.beta / 2.0:
                raise ConfigError(f"need alpha > beta / 2 (alpha={self.alpha}, beta={self.beta})")

    def for_horizon(self, T: int) -> "DFConfig":
        if self.beta is not None:
            return self
        return replace(self, beta=horizon_beta(self.alpha, T))

    @property
    def C0(self) -> float:
        return 1.0 + 2.0 * self.rho + self.lam / 2.0 + self.M

    @property
    def C(self) -> float:
        if self.beta is None:
            raise ConfigError("beta is unresolved; call for_horizon(T) first")
        return 2.0 * self.C0 + 4.0 * (1.0 - self.alpha) ** 2 / (self.rho * (self.alpha - self.beta / 2.0) ** 2)


def horizon_beta(alpha: float, T: int) -> float:
    return min(alpha, 2.0 * math.log(T + 1.0) / T)


@dataclass(frozen=True)
class DCert:
    S: Point
    B: float = 0.0
    d: float = 0.0


def dcert_update(cert: DCert, g: Point, y: Point, omega: float, geom: Geometry) -> DCert:
    """Accumulate one weighted gradient into the distance certificate."""
    if omega < 0:
        raise ConfigError("omega must be nonnegative")
    S = cert.S + g * omega
    B = cert.B - omega * inner(g, y)
    s_norm = dual_norm(S, geom)
    d_hat = max(B, 0.0) / s_norm if s_norm > 0 else 0.0
    return DCert(S, B, max(cert.d, d_hat))


@dataclass(frozen=True)
class RayState:
    x0: Point
    x: Point
    y: Point
    s: Point
    c: Point
    beta: float

    def z(self, R: float) -> Point:
        return self.c + self.s * (self.beta * R)


def ray_state(x0: Point, x: Point, m_next: Point, beta: float, geom: Geometry) -> RayState:
    y = x - x0
    s = lmo_descent(m_next, geom)
    c = x0 + y * (1.0 - beta)
    return RayState(x0, x, y, s, c, beta)


class Majorant:
    """R -> Q_k(R) for one fixed state; evaluation is a pure function of R."""

    def __init__(self, state: RayState, g: Point, L: float, cfg: DFConfig, d_next: float,
                 f_x: float, geom: Geometry):
        if cfg.beta is None:
            raise ConfigError("beta is unresolved")
        self.state, self.L, self.cfg, self.d, self.f_x, self.geom = state, L, cfg, d_next, f_x, geom
        self.gs = inner(g, state.s)
        self.gy = inner(g, state.y)

    def smooth_model(self, R: float) -> float:
        """First three terms: the smoothness upper model of f(z(R))."""
        b, L = self.cfg.beta, self.L
        w = primal_norm(self.state.s * R - self.state.y, self.geom)
        return self.f_x + b * (R * self.gs - self.gy) + 0.5 * L * b * b * w * w

    def __call__(self, R: float) -> float:
        st, cfg, L = self.state, self.cfg, self.L
        b = cfg.beta
        w = primal_norm(st.s * R - st.y, self.geom)
        v = primal_norm(st.y * (1.0 - b) + st.s * (b * R), self.geom)
        return (self.f_x
                + b * (R * self.gs - self.gy)
                + 0.5 * L * b * b * w * w
                + cfg.M * b * L * v * v
                + cfg.rho * L * b * b * w * w
                + 0.5 * cfg.lam * L * b * b * (R - self.d) ** 2)


def majorant_eval(state: RayState, g: Point, L: float, cfg: DFConfig, d_next: float, f_x: float,
                  R: float, geom: Geometry) -> float:
    if R < 0:
        raise ConfigError("R must be nonnegative")
    return Majorant(state, g, L, cfg, d_next, f_x, geom)(R)


def _quadratic_vertex(Q: Majorant) -> Optional[float]:
    q0, q1, q2, q3 = Q(0.0), Q(1.0), Q(2.0), Q(3.0)
    curv = 0.5 * (q2 - 2.0 * q1 + q0)
    lin = q1 - q0 - curv
    pred = q0 + 3.0 * lin + 9.0 * curv
    if curv <= 0 or abs(pred - q3) > FIT_RTOL * max(1.0, abs(q3)):
        return None
    return max(0.0, -lin / (2.0 * curv))


def _ternary(Q: Majorant, d_next: float, tol: float) -> float:
    hi = max(1.0, 2.0 * d_next)
    for _ in range(2000):
        if Q(hi) >= Q(0.5 * hi):
            break
        hi *= 2.0
    else:
        raise ConfigError("radius search failed to bracket a minimizer")
    lo = 0.0
    width = tol * max(1.0, hi)
    while hi - lo > width:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if Q(m1) <= Q(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def radius_search(state: RayState, g: Point, L: float, cfg: DFConfig, d_next: float, f_x: float,
                  geom: Geometry, tol: float = 1e-10) -> float:
    """Minimize Q_k over R >= 0.

    A single Euclidean block makes Q an exact quadratic in R; its coefficients
    are fitted from three samples and checked against a fourth. Otherwise a
    doubling bracket is followed by ternary search.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    Q = Majorant(state, g, L, cfg, d_next, f_x, geom)
    if not math.isfinite(Q(0.0)):
        raise ConfigError("non-finite majorant value")
    if geom.inner_product_norm:
        R = _quadratic_vertex(Q)
        if R is not None:
            return R
    return _ternary(Q, d_next, tol)


def thm3_bound(gap0: float, L: float, D: float, cfg: DFConfig, T: int) -> float:
    """(1 - beta/2)^T gap0 + C L beta D^2 for a resolved config."""
    cfg = cfg.for_horizon(T)
    if not cfg.alpha > cfg.beta / 2.0:
        raise ConfigError("need alpha > beta / 2")
    if D < 0:
        raise ConfigError("D must be nonnegative")
    return (1.0 - cfg.beta / 2.0) ** T * gap0 + cfg.C * L * cfg.beta * D * D


def _omega(rule: str, g: Point, geom: Geometry) -> float:
    if rule == "unit":
        return 1.0
    return 1.0 / max(1.0, dual_norm(g, geom))


def df_run(p, geom: Optional[Geometry] = None, cfg: DFConfig = DFConfig(), T: int = 100,
           d0: float = 0.0, x0: Optional[Point] = None, tol: float = 1e-10,
           strict: bool = True) -> Trace:
    """Run Distance-Free Muon for ``T`` steps.

    With ``strict`` the run asserts that ``d`` never decreases, that the
    smoothness model majorizes the realized objective, and, when the problem
    has a known minimizer and is star-convex, that ``d`` stays below
    ||x_0 - x*||.
    """
    geom = geom or p.geometry
    if T < 1:
        raise ConfigError("T must be >= 1")
    if d0 < 0:
        raise ConfigError("d0 must be nonnegative")
    cfg = cfg.for_horizon(T)
    L = p.L
    x0 = (p.x0 if x0 is None else x0).copy()
    geom.check(x0)
    star = p.x_star is not None and bool(p.flags & {"convex", "star_convex_verified"})
    D = p.distance_to_star(x0) if p.x_star is not None else None

    trace = Trace("df", COLUMNS, meta={"cfg": cfg, "L": L, "d0": d0, "D": D})
    x = x0.copy()
    g = p.grad(x)
    m = g
    cert = DCert(x.zeros_like(), 0.0, d0)
    model_prev = None
    for k in range(T):
        fx = objective(p, x, k)
        if k > 0:
            g = p.grad(x)
        if strict and model_prev is not None and fx > model_prev + MAJOR_SLACK:
            raise InvariantError(MAJORIZATION, k - 1, model_prev + MAJOR_SLACK - fx)
        y = x - x0
        d_prev = cert.d
        cert = dcert_update(cert, g, y, _omega(cfg.omega, g, geom), geom)
        if strict and cert.d < d_prev:
            raise InvariantError(D_CERT, k, cert.d - d_prev, "d decreased")
        if strict and star and cert.d > D + CERT_SLACK:
            raise InvariantError(D_CERT, k, D + CERT_SLACK - cert.d)
        m = ema_update(m, g, cfg.alpha)
        state = ray_state(x0, x, m, cfg.beta, geom)
        Q = Majorant(state, g, L, cfg, cert.d, fx, geom)
        R = radius_search(state, g, L, cfg, cert.d, fx, geom, tol=tol)
        model_prev = Q.smooth_model(R)
        # z(R) = c + beta R s = c - beta R u(m)
        x_next = tr_step(state.c, m, cfg.beta * R, geom, step=k)
        trace.append(k=k, f=fx, gap=p.gap(fx), grad_dual_norm=dual_norm(g, geom), R=R, d=cert.d,
                     eta=cfg.beta * R, step_norm=primal_norm(x_next - x, geom),
                     y_norm=primal_norm(y, geom), e_norm=dual_norm(g - m, geom), model=model_prev)
        x = x_next
    fx = objective(p, x, T)
    if strict and fx > model_prev + MAJOR_SLACK:
        raise InvariantError(MAJORIZATION, T - 1, model_prev + MAJOR_SLACK - fx)
    trace.final = {"x": x, "f": fx, "gap": p.gap(fx), "grad_dual_norm": dual_norm(p.grad(x), geom),
                   "y_norm": primal_norm(x - x0, geom), "d": cert.d}
    return trace


def one_step_margins(trace: Trace, D: float) -> np.ndarray:
    """Slack of L_{k+1} + rho L ||x_{k+1}-x_k||^2 <= (1-beta/2) L_k + C0 L beta^2 D^2 + 2 beta D ||e_k||_*."""
    cfg, L = trace.meta["cfg"], trace.meta["L"]
    b = cfg.beta
    gap = np.append(trace.column("gap"), trace.final["gap"])
    yn = np.append(trace.column("y_norm"), trace.final["y_norm"])
    lyap = gap + cfg.M * b * L * yn ** 2
    step = trace.column("step_norm")
    e = trace.column("e_norm")
    rhs = (1 - b / 2) * lyap[:-1] + cfg.C0 * L * b * b * D * D + 2 * b * D * e
    return rhs + 1e-8 - (lyap[1:] + cfg.rho * L * step ** 2)
