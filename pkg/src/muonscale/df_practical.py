"""Frobenius-proxy scalar rule for stochastic Muon training.

Each step orthogonalizes the momentum of every matrix block with Newton-Schulz,
aggregates four Frobenius statistics over the blocks, and picks a base scale by
minimizing a one-dimensional quadratic score on a capped log grid. The result
is smoothed toward the previous scale and multiplied by a warmup-cosine
schedule. Only the minibatch gradient already needed for the step is used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ConfigError, DivergenceError
from .geometry import Point, inner, orthogonalize
from .muon_base import Trace

D_EPS = 1e-12
COLUMNS = ("k", "loss", "grad_norm", "d", "base_scale", "schedule", "effective_scale")


@dataclass(frozen=True)
class PracticalCfg:
    eta_min: float = 0.006
    eta_init: float = 0.015
    eta_max: float = 0.03
    smoothing: float = 0.70
    grid_points: int = 21
    refine_steps: int = 6
    c_step: float = 0.10
    c_center: float = 0.02
    c_proxy: float = 0.10
    # EMA weight on the new gradient; 0.1 matches the usual Muon momentum of 0.9
    alpha: float = 0.1
    ns_iters: int = 5

    def __post_init__(self):
        if not 0.0 < self.eta_min <= self.eta_init <= self.eta_max:
            raise ConfigError("need 0 < eta_min <= eta_init <= eta_max")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError("smoothing must lie in [0, 1)")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be >= 2")
        if self.refine_steps < 0:
            raise ConfigError("refine_steps must be >= 0")
        if min(self.c_step, self.c_center, self.c_proxy) < 0:
            raise ConfigError("score coefficients must be nonnegative")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.ns_iters < 1:
            raise ConfigError("ns_iters must be >= 1")

    @classmethod
    def no_center(cls, **kw) -> "PracticalCfg":
        return cls(**{"c_step": 0.10, "c_center": 0.0, "c_proxy": 0.10, **kw})


@dataclass(frozen=True)
class StepStats:
    A: float = 0.0
    B: float = 0.0
    C: float = 0.0
    G: float = 0.0


def aggregate_stats(blocks: Sequence[tuple]) -> StepStats:
    """Sum ||u||^2, <y,u>, ||y||^2 and <g,u> over (u, g, y) block triples."""
    A = B = C = G = 0.0
    for j, (u, g, y) in enumerate(blocks):
        u, g, y = np.asarray(u, float), np.asarray(g, float), np.asarray(y, float)
        if not u.shape == g.shape == y.shape:
            raise ConfigError(f"block {j}: shapes {u.shape}, {g.shape}, {y.shape} differ")
        A += float(np.vdot(u, u))
        B += float(np.vdot(y, u))
        C += float(np.vdot(y, y))
        G += float(np.vdot(g, u))
    return StepStats(A, B, C, G)


def practical_score(eta: float, stats: StepStats, cfg: PracticalCfg, d_proxy: float) -> float:
    """Descent model plus step, center and proxy penalties; C - 2 eta B + eta^2 A = sum ||y - eta u||^2."""
    if eta < 0:
        raise ConfigError("eta must be nonnegative")
    A, B, C, G = stats.A, stats.B, stats.C, stats.G
    return (-eta * G + cfg.c_step * eta * eta * A
            + cfg.c_center * (C - 2.0 * eta * B + eta * eta * A)
            + cfg.c_proxy * (eta - d_proxy) ** 2)


def scale_candidate(stats: StepStats, cfg: PracticalCfg, d_proxy: float) -> float:
    """Log-grid search plus shrinking three-point refinement, clamped to the cap."""
    lo, hi = math.log(cfg.eta_min), math.log(cfg.eta_max)
    score = lambda t: practical_score(math.exp(t), stats, cfg, d_proxy)
    if hi == lo:
        return cfg.eta_min
    grid = np.linspace(lo, hi, cfg.grid_points)
    vals = [score(t) for t in grid]
    c = float(grid[int(np.argmin(vals))])
    best = min(vals)
    h = (hi - lo) / (cfg.grid_points - 1)
    c_new = None
    for _ in range(cfg.refine_steps):
        h /= 2.0
        for t in (max(lo, c - h), min(hi, c + h)):
            v = score(t)
            if v < best:
                best, c_new = v, t
        if c_new is not None:
            c, c_new = c_new, None
    # endpoints map back exactly so a cap hit returns the cap itself
    if c >= hi:
        return cfg.eta_max
    if c <= lo:
        return cfg.eta_min
    return float(min(cfg.eta_max, max(cfg.eta_min, math.exp(c))))


def select_scale(stats: StepStats, cfg: PracticalCfg, prev_scale: float, d_proxy: float) -> float:
    if not cfg.eta_min <= prev_scale <= cfg.eta_max:
        raise ConfigError(f"previous scale {prev_scale} outside [{cfg.eta_min}, {cfg.eta_max}]")
    cand = scale_candidate(stats, cfg, d_proxy)
    out = cfg.smoothing * prev_scale + (1.0 - cfg.smoothing) * cand
    # a convex combination can round one ulp outside the interval
    return min(cfg.eta_max, max(cfg.eta_min, out))


def warmup_cosine(t: int, T: int, warmup_frac: float = 0.05) -> float:
    """Linear warmup from 0 over the first steps, then cosine decay toward 0."""
    if T < 1 or not 0 <= t < T:
        raise ConfigError(f"step {t} outside [0, {T})")
    w = max(1, int(round(warmup_frac * T)))
    if t < w:
        return t / w
    span = max(1, T - w)
    return 0.5 * (1.0 + math.cos(math.pi * (t - w) / span))


def d_proxy_update(s: float, b: float, d: float, G: float, gy: float):
    """Scalar distance proxy: s += <g,u>, b -= <g,y>, d = max(d, b_+ / |s|)."""
    s = s + G
    b = b - gy
    return s, b, max(d, max(b, 0.0) / max(abs(s), D_EPS))


@dataclass
class SoftmaxModel:
    """Multiclass logistic regression with the bias folded into one weight matrix."""

    X: np.ndarray
    labels: np.ndarray
    n_classes: int
    grad_evals: int = 0

    def init_params(self, rng) -> Point:
        return Point([("W", np.zeros((self.n_classes, self.X.shape[1])))])

    def loss(self, params: Point, idx=None) -> float:
        X, yl = (self.X, self.labels) if idx is None else (self.X[idx], self.labels[idx])
        logp = log_softmax(X @ params["W"].T, axis=1)
        return float(-np.mean(logp[np.arange(len(yl)), yl]))

    def loss_and_grad(self, params: Point, idx):
        self.grad_evals += 1
        X, yl = self.X[idx], self.labels[idx]
        z = X @ params["W"].T
        logp = log_softmax(z, axis=1)
        P = softmax(z, axis=1)
        P[np.arange(len(yl)), yl] -= 1.0
        return float(-np.mean(logp[np.arange(len(yl)), yl])), Point([("W", P.T @ X / len(yl))])


@dataclass
class MLPModel:
    """One tanh hidden layer, no biases; every parameter is a matrix."""

    X: np.ndarray
    labels: np.ndarray
    n_classes: int
    hidden: int = 16
    grad_evals: int = 0

    def init_params(self, rng) -> Point:
        d = self.X.shape[1]
        W1 = rng.standard_normal((self.hidden, d)) / math.sqrt(d)
        W2 = rng.standard_normal((self.n_classes, self.hidden)) / math.sqrt(self.hidden)
        return Point([("W1", W1), ("W2", W2)])

    def _forward(self, params, X):
        H = np.tanh(X @ params["W1"].T)
        return H, H @ params["W2"].T

    def loss(self, params: Point, idx=None) -> float:
        X, yl = (self.X, self.labels) if idx is None else (self.X[idx], self.labels[idx])
        logp = log_softmax(self._forward(params, X)[1], axis=1)
        return float(-np.mean(logp[np.arange(len(yl)), yl]))

    def loss_and_grad(self, params: Point, idx):
        self.grad_evals += 1
        X, yl = self.X[idx], self.labels[idx]
        n = len(yl)
        H, z = self._forward(params, X)
        logp = log_softmax(z, axis=1)
        dz = softmax(z, axis=1)
        dz[np.arange(n), yl] -= 1.0
        dz /= n
        gW2 = dz.T @ H
        dH = (dz @ params["W2"]) * (1.0 - H * H)
        gW1 = dH.T @ X
        return float(-np.mean(logp[np.arange(n), yl])), Point([("W1", gW1), ("W2", gW2)])


def _classification_data(seed: int, n: int, n_features: int, n_classes: int, noise: float):
    rng = np.random.default_rng(20_000 + seed)
    X = rng.standard_normal((n, n_features))
    W = rng.standard_normal((n_classes, n_features))
    labels = np.argmax(X @ W.T + noise * rng.standard_normal((n, n_classes)), axis=1)
    # constant feature plays the role of a bias
    return np.hstack([X, np.ones((n, 1))]), labels


def tiny_logistic(seed: int = 0, n: int = 512, n_features: int = 10, n_classes: int = 4) -> SoftmaxModel:
    X, labels = _classification_data(seed, n, n_features, n_classes, noise=1.0)
    return SoftmaxModel(X, labels, n_classes)


def tiny_mlp(seed: int = 0, n: int = 512, n_features: int = 10, n_classes: int = 4,
             hidden: int = 16) -> MLPModel:
    X, labels = _classification_data(seed, n, n_features, n_classes, noise=1.0)
    return MLPModel(X, labels, n_classes, hidden)


MODELS: dict[str, Callable] = {"tiny_logistic": tiny_logistic, "tiny_mlp": tiny_mlp}


def practical_run(model, cfg: PracticalCfg = PracticalCfg(), T: int = 500, seed: int = 0,
                  batch_size: int = 32, schedule: Callable[[int, int], float] = warmup_cosine) -> Trace:
    """Minibatch training with the Frobenius-proxy scale rule.

    Row ``k`` holds the minibatch loss at the parameters before step ``k``.
    ``meta["grad_evals"]`` counts gradient evaluations made during the run.
    """
    if T < 1:
        raise ConfigError("T must be >= 1")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    n = model.X.shape[0]
    x0 = model.init_params(rng)
    for name, a in zip(x0.names, x0.blocks):
        if a.ndim != 2:
            raise ConfigError(f"block {name} is not a matrix")
    x = x0.copy()
    m = None
    scale = cfg.eta_init
    s = b = d = 0.0
    evals_before = model.grad_evals
    trace = Trace("df_practical", COLUMNS, meta={"cfg": cfg, "seed": seed, "batch_size": batch_size})
    for k in range(T):
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        loss, g = model.loss_and_grad(x, idx)
        if not math.isfinite(loss):
            raise DivergenceError(k, loss)
        m = g if m is None else m * (1.0 - cfg.alpha) + g * cfg.alpha
        u = x._new([_direction(a, cfg.ns_iters) for a in m.blocks])
        y = x - x0
        stats = aggregate_stats(list(zip(u.blocks, g.blocks, y.blocks)))
        s, b, d = d_proxy_update(s, b, d, stats.G, inner(g, y))
        scale = select_scale(stats, cfg, scale, d)
        sched = schedule(k, T)
        eff = sched * scale
        trace.append(k=k, loss=loss, grad_norm=math.sqrt(inner(g, g)), d=d, base_scale=scale,
                     schedule=sched, effective_scale=eff)
        x = x - u * eff
    trace.meta["grad_evals"] = model.grad_evals - evals_before
    trace.final = {"x": x, "loss": model.loss(x)}
    return trace


def _direction(a: np.ndarray, iters: int) -> np.ndarray:
    if not np.any(a):
        return np.zeros_like(a)
    return orthogonalize(a, mode="newton_schulz", iters=iters)
