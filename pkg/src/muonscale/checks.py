"""Invariant suites: run the optimizers on seeded problems and report worst margins.

Every check returns a :class:`CheckResult` whose ``worst_margin`` is the
smallest observed slack of the inequality (negative means violated) and whose
``step`` locates it when it comes from a trajectory.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import da_muon, df_muon, df_practical, geometry as geo, sc_muon
from .errors import InvariantError
from .geometry import Geometry, Point, dual_norm, inner, primal_norm
from .problems import make_problem, smoothness_margins
from .testkit import majorant_on_grid

SUITES = ("geometry", "problems", "da", "sc", "df", "practical", "all")
FAULTS = ("negate-lmo",)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    step: Optional[int] = None
    detail: str = ""

    def line(self) -> str:
        where = "" if self.step is None else f" step={self.step}"
        tail = f" ({self.detail})" if self.detail else ""
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  worst_margin={self.worst_margin:.3e}{where}{tail}"


def _from_margins(name: str, margins, steps=None) -> CheckResult:
    margins = np.asarray(margins, dtype=np.float64)
    if margins.size == 0:
        return CheckResult(name, True, math.inf)
    i = int(np.argmin(margins))
    step = i if steps is None else int(steps[i])
    worst = float(margins[i])
    return CheckResult(name, bool(worst >= 0.0), worst, step)


def _guard(fn: Callable[[], list]) -> list:
    """Turn an inline assertion raised mid-run into a failed check."""
    try:
        return fn()
    except InvariantError as err:
        return [CheckResult(err.lemma, False, float(err.margin), err.step, err.detail)]


@contextlib.contextmanager
def inject_fault(name: Optional[str]):
    """Temporarily corrupt the LMO so the suites can be shown to catch it."""
    if name is None:
        yield
        return
    if name not in FAULTS:
        raise ValueError(f"unknown fault {name!r}; expected one of {FAULTS}")
    original = geo.lmo_ascent
    geo.lmo_ascent = lambda m, g: -original(m, g)
    try:
        yield
    finally:
        geo.lmo_ascent = original


# ---------------------------------------------------------------- geometry

def random_point(rng, geom: Geometry, shapes) -> Point:
    return Point([(f"b{i}", rng.standard_normal(s) * rng.uniform(0.1, 10.0))
                  for i, s in enumerate(shapes)])


def _shape_for(tag: str, rng) -> tuple:
    if tag == "spectral":
        return (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
    return (int(rng.integers(1, 7)),)


def random_geometry(rng, max_blocks: int = 2):
    n = int(rng.integers(1, max_blocks + 1))
    tags = tuple(str(rng.choice(geo.TAGS)) for _ in range(n))
    return Geometry(tags), [_shape_for(t, rng) for t in tags]


def geometry_suite(n: int = 500, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for tag in geo.TAGS:
        geom = Geometry.of(tag)
        nonneg, homog, tri, pair, holder, svals = [], [], [], [], [], []
        for _ in range(n):
            shape = [_shape_for(tag, rng)]
            a, b = random_point(rng, geom, shape), random_point(rng, geom, shape)
            da, db = dual_norm(a, geom), dual_norm(b, geom)
            nonneg.append(da)
            lam = rng.uniform(-5.0, 5.0)
            homog.append(1e-10 * max(abs(lam) * da, 1e-300) - abs(dual_norm(a * lam, geom) - abs(lam) * da))
            tri.append(da + db + 1e-10 * (da + db) - dual_norm(a + b, geom))
            u = geo.lmo_ascent(a, geom)
            pair.append(1e-8 * da - abs(inner(a, u) - da))
            holder.append(da * primal_norm(b, geom) * (1 + 1e-10) + 1e-12 - abs(inner(a, b)))
            if tag == "spectral":
                s = np.linalg.svd(geo.orthogonalize(a.blocks[0]), compute_uv=False)
                svals.append(1e-8 - np.min(np.minimum(np.abs(s), np.abs(s - 1.0))))
        out += [
            _from_margins(f"[{tag}] dual norm nonnegative", nonneg),
            _from_margins(f"[{tag}] dual norm homogeneous", homog),
            _from_margins(f"[{tag}] dual norm triangle inequality", tri),
            _from_margins(f"[{tag}] LMO pairing identity", pair),
            _from_margins(f"[{tag}] generalized Hoelder", holder),
        ]
        if svals:
            out.append(_from_margins("[spectral] exact orthogonalize singular values in {0,1}", svals))
    return out


def problems_suite(seed: int = 0) -> list:
    out = []
    for name in ("quad_iso", "least_squares", "logistic", "ripple", "star_1d"):
        for tag in ("euclidean", "linf_sign", "spectral"):
            if name == "logistic" and tag == "spectral":
                continue
            p = make_problem(name, dim=4, seed=seed, geometry=tag)
            ratio = smoothness_margins(p, seed=seed)
            out.append(CheckResult(f"[{name}/{tag}] declared L bounds gradient variation",
                                   ratio <= 1.0 + 1e-6, 1.0 + 1e-6 - ratio))
    p = make_problem("least_squares", dim=6, seed=seed)
    fs = p.f(p.x_star)
    out.append(CheckResult("[least_squares] f(x*) vanishes", fs <= 1e-18, 1e-18 - fs))
    return out


# ---------------------------------------------------------------- algorithms

def da_suite(T: int = 400, seed: int = 0) -> list:
    def run():
        out = []
        for name, dim in (("ripple", 10), ("quad_iso", 5)):
            p = make_problem(name, dim=dim, seed=seed)
            for alpha in (0.5, 0.9):
                tag = f"[{name} alpha={alpha}]"
                tr = da_muon.da_run(p, alpha=alpha, T=T, strict=False)
                rb = tr.column("r_bar")
                out.append(_from_margins(f"{tag} r_bar monotone", np.diff(rb), np.arange(1, len(rb))))
                out.append(_from_margins(f"{tag} {da_muon.MOMENTUM_TRACKING}",
                                         da_muon.momentum_tracking_margins(tr, p.L, alpha)))
                D = da_muon.realized_radius(tr)
                bound = da_muon.thm1_bound(p.gap(tr.rows[0][1]), tr.meta["r"], D, p.L, alpha, T)
                got = da_muon.min_next_grad(tr)
                out.append(CheckResult(f"{tag} stationarity bound", got <= bound, bound - got, T,
                                       f"D={D:.4g}"))
                out.append(CheckResult(f"{tag} bounded trajectory", math.isfinite(D),
                                       0.0 if math.isfinite(D) else -math.inf, detail=f"max dist {D:.4g}"))
        return out
    return _guard(run)


def sc_suite(T: int = 400, seed: int = 0) -> list:
    def run():
        out = []
        for name in ("quad_iso", "least_squares", "logistic", "star_1d"):
            p = make_problem(name, dim=5, seed=seed)
            for alpha in (0.3, 0.6, 0.9):
                tag = f"[{name} alpha={alpha}]"
                tr = sc_muon.sc_run(p, alpha=alpha, T=T, strict=False)
                for lemma, marg in sc_muon.lemma_margins(tr, p.L, alpha).items():
                    out.append(_from_margins(f"{tag} {lemma}", marg))
                out.append(_from_margins(f"{tag} {sc_muon.GAP_TO_CERTIFICATE}",
                                         sc_muon.gap_certificate_margins(tr)))
        p = make_problem("quad_iso", dim=5, seed=seed)
        gap0 = p.gap(p.f(p.x0))
        d_lev = math.sqrt(2.0 * gap0 / p.L)
        for alpha in (0.3, 0.6, 0.9):
            tr = sc_muon.sc_run(p, alpha=alpha, T=T, strict=False)
            bound = sc_muon.thm2_bound(p.L, d_lev, alpha, T)
            gap = tr.final["gap"]
            out.append(CheckResult(f"[quad_iso alpha={alpha}] last-iterate gap bound", gap <= bound,
                                   bound - gap, T))
        return out
    return _guard(run)


def random_df_state(rng, cfg: Optional[df_muon.DFConfig] = None):
    """A seeded (state, g, L, cfg, d, f_x, geom) tuple for majorant tests."""
    geom, shapes = random_geometry(rng)
    pt = lambda: random_point(rng, geom, shapes)
    x0, x, m, g = pt(), pt(), pt(), pt()
    if cfg is None:
        cfg = df_muon.DFConfig(beta=float(rng.uniform(0.02, 0.9)))
    state = df_muon.ray_state(x0, x, m, cfg.beta, geom)
    return state, g, float(rng.uniform(0.2, 5.0)), cfg, float(rng.uniform(0.0, 5.0)), \
        float(rng.standard_normal()), geom


def majorant_bracket(Q: df_muon.Majorant, g: Point) -> float:
    """An R beyond which Q exceeds Q(0), from the coercive lower model.

    Q(R) >= f - beta<g,y> - beta R ||g||_* + (lam L beta^2 / 2)(R - d)^2.
    """
    b, L, lam, d = Q.cfg.beta, Q.L, Q.cfg.lam, Q.d
    a2 = 0.5 * lam * L * b * b
    a1 = -b * dual_norm(g, Q.geom) - 2.0 * a2 * d
    a0 = Q.f_x - b * Q.gy + a2 * d * d - Q(0.0)
    disc = a1 * a1 - 4.0 * a2 * a0
    return max(1.0, (-a1 + math.sqrt(max(disc, 0.0))) / (2.0 * a2)) * 1.01


def df_suite(T: int = 256, seed: int = 0, n_states: int = 50) -> list:
    def run():
        out = []
        rng = np.random.default_rng(seed)
        conv = []
        for _ in range(n_states):
            state, g, L, cfg, d, fx, geom = random_df_state(rng)
            Q = df_muon.Majorant(state, g, L, cfg, d, fx, geom)
            hi = 4.0 * majorant_bracket(Q, g)
            vals = majorant_on_grid(state, g, L, cfg, d, fx, geom, np.linspace(0.0, hi, 1000))
            conv.append(float(np.min(vals[:-2] - 2 * vals[1:-1] + vals[2:])) + 1e-9 * max(1.0, np.max(np.abs(vals))))
        out.append(_from_margins("[random states] majorant convexity", conv))

        for name in ("quad_iso", "least_squares", "star_1d"):
            p = make_problem(name, dim=5, seed=seed)
            D = p.distance_to_star(p.x0)
            for omega in df_muon.OMEGA_RULES:
                tag = f"[{name} omega={omega}]"
                cfg = df_muon.DFConfig(omega=omega)
                tr = df_muon.df_run(p, cfg=cfg, T=T, strict=False)
                dcol = np.append(tr.column("d"), tr.final["d"])
                out.append(_from_margins(f"{tag} {df_muon.D_CERT}", D + df_muon.CERT_SLACK - dcol))
                out.append(_from_margins(f"{tag} d monotone", np.diff(dcol)))
                f = np.append(tr.column("f"), tr.final["f"])
                out.append(_from_margins(f"{tag} {df_muon.MAJORIZATION}",
                                         tr.column("model") + df_muon.MAJOR_SLACK - f[1:]))
                if name != "star_1d":
                    out.append(_from_margins(f"{tag} {df_muon.ONE_STEP}", df_muon.one_step_margins(tr, D)))
                gap0 = p.gap(tr.rows[0][1])
                bound = df_muon.thm3_bound(gap0, p.L, D, cfg, T)
                out.append(CheckResult(f"{tag} last-iterate gap bound", tr.final["gap"] <= bound + 1e-8,
                                       bound + 1e-8 - tr.final["gap"], T))
        return out
    return _guard(run)


def practical_suite(T: int = 200, seed: int = 0) -> list:
    out = []
    cfg = df_practical.PracticalCfg()
    for name, make in df_practical.MODELS.items():
        model = make(seed)
        tr = df_practical.practical_run(model, cfg, T=T, seed=seed)
        ev = tr.meta["grad_evals"]
        out.append(CheckResult(f"[{name}] one gradient evaluation per step", ev == T, -float(abs(ev - T))))
        s = tr.column("base_scale")
        out.append(_from_margins(f"[{name}] base scale within cap",
                                 np.minimum(s - cfg.eta_min, cfg.eta_max - s)))
        step_cap = (1.0 - cfg.smoothing) * (cfg.eta_max - cfg.eta_min) * (1 + 1e-12)
        out.append(_from_margins(f"[{name}] smoothed scale changes bounded",
                                 step_cap - np.abs(np.diff(np.append(cfg.eta_init, s)))))
        tr2 = df_practical.practical_run(make(seed), cfg, T=T, seed=seed)
        same = tr.to_csv() == tr2.to_csv()
        out.append(CheckResult(f"[{name}] deterministic trace", same, 0.0 if same else -1.0))

    rng = np.random.default_rng(seed)
    free = df_practical.PracticalCfg(c_center=0.0, c_proxy=0.0)
    worst = math.inf
    for _ in range(50):
        blocks = [(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), rng.standard_normal((3, 4)))
                  for _ in range(2)]
        shift = [(u, g, y + rng.standard_normal((3, 4))) for u, g, y in blocks]
        a = df_practical.select_scale(df_practical.aggregate_stats(blocks), free, free.eta_init, 0.3)
        b = df_practical.select_scale(df_practical.aggregate_stats(shift), free, free.eta_init, 0.3)
        worst = min(worst, -abs(a - b))
    out.append(CheckResult("[score] scale ignores y without center/proxy terms", worst >= 0.0, worst))
    return out


RUNNERS = {
    "geometry": geometry_suite,
    "problems": problems_suite,
    "da": da_suite,
    "sc": sc_suite,
    "df": df_suite,
    "practical": practical_suite,
}


def run_suite(name: str, fault: Optional[str] = None) -> list:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    names = [s for s in SUITES if s != "all"] if name == "all" else [name]
    results = []
    with inject_fault(fault):
        for s in names:
            results += RUNNERS[s]()
    return results
