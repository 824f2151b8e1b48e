"""Momentum, the generic trust-region step, traces, and the fixed-scale Muon baseline."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as _geo
from .errors import ConfigError, DivergenceError, InvariantError
from .geometry import Geometry, Point, dual_norm, inner

IDENTITY_RTOL = 1e-8
IDENTITY = "Trust-region optimality identity"


@dataclass
class Trace:
    """Per-iteration records of one run.

    Row ``k`` describes iterate ``x_k`` and the step taken from it; ``final``
    holds the same quantities for the last iterate ``x_T``.
    """

    algo: str
    columns: tuple
    rows: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def append(self, **rec):
        self.rows.append(tuple(rec[c] for c in self.columns))

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([np.nan if r[i] is None else r[i] for r in self.rows], dtype=np.float64)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue() if fh is None else ""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    # repr gives the shortest string that round-trips the double
    return repr(float(v))


def ema_update(m: Point, g: Point, alpha: float) -> Point:
    if not 0.0 < alpha <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    return m * (1.0 - alpha) + g * alpha


def tr_step(x: Point, m: Point, eta: float, geom: Geometry, step: Optional[int] = None) -> Point:
    """Return ``x - eta * u(m)`` after checking <m, eta u> = eta * ||m||_*.

    The identity is checked at unit radius, <m, u> = ||m||_*, which implies it
    for every eta and still catches a broken LMO when eta = 0.
    """
    if eta < 0:
        raise ConfigError(f"radius must be nonnegative, got {eta}")
    u = _geo.lmo_ascent(m, geom)
    lhs = inner(m, u)
    rhs = dual_norm(m, geom)
    if abs(lhs - rhs) > IDENTITY_RTOL * max(abs(rhs), 1e-300):
        raise InvariantError(IDENTITY, step if step is not None else -1, -abs(lhs - rhs),
                             f"<m, u(m)> = {lhs!r}, ||m||_* = {rhs!r}, eta = {eta!r}")
    delta = u * eta
    return x - delta


def objective(p, x: Point, k: int) -> float:
    fx = float(p.f(x))
    if not math.isfinite(fx):
        raise DivergenceError(k, fx)
    return fx


def fixed_muon_run(p, geom: Optional[Geometry] = None, eta: float = 0.1, alpha: float = 0.5,
                   T: int = 100, x0: Optional[Point] = None) -> Trace:
    """Muon with a constant radius: x_{k+1} = x_k - eta * u(m_{k+1})."""
    geom = geom or p.geometry
    if T < 1:
        raise ConfigError("T must be >= 1")
    if eta < 0:
        raise ConfigError("eta must be nonnegative")
    x = (p.x0 if x0 is None else x0).copy()
    geom.check(x)
    trace = Trace("fixed", ("k", "f", "gap", "grad_dual_norm", "eta"),
                  meta={"eta": eta, "alpha": alpha})
    g = p.grad(x)
    m = g  # warm start m_0 = grad f(x_0)
    for k in range(T):
        fx = objective(p, x, k)
        if k > 0:
            g = p.grad(x)
        m = ema_update(m, g, alpha)
        trace.append(k=k, f=fx, gap=p.gap(fx), grad_dual_norm=dual_norm(g, geom), eta=eta)
        x = tr_step(x, m, eta, geom, step=k)
    fx = objective(p, x, T)
    trace.final = {"x": x, "f": fx, "gap": p.gap(fx), "grad_dual_norm": dual_norm(p.grad(x), geom)}
    return trace
