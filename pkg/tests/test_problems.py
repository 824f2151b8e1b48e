import numpy as np
import pytest
from hypothesis import given, strategies as st

from muonscale.errors import ConfigError
from muonscale.geometry import Point, dual_norm
from muonscale.problems import (
    PROBLEMS, finite_diff_check, make_problem, second_difference_scan, smoothness_margins,
    star_convexity_check,
)

TAGS = ["euclidean", "linf_sign", "spectral"]


def cases():
    for name in PROBLEMS:
        for tag in TAGS:
            if not (name == "logistic" and tag == "spectral"):
                yield name, tag


def test_quad_iso_gradient():
    p = make_problem("quad_iso", dim=2)
    np.testing.assert_allclose(p.grad(Point.single([1.0, 0.0])).blocks[0], [1.0, 0.0])


def test_least_squares_minimizer_exact():
    p = make_problem("least_squares", dim=6, seed=3)
    assert p.f(p.x_star) <= 1e-18
    assert dual_norm(p.grad(p.x_star), p.geometry) <= 1e-10


def test_ripple_origin():
    p = make_problem("ripple", dim=1)
    assert p.f(Point.single([0.0])) == 0.0
    assert p.grad(Point.single([0.0])).blocks[0][0] == 0.0


@pytest.mark.parametrize("name,tag", list(cases()))
def test_declared_L_bounds_gradient_variation(name, tag):
    p = make_problem(name, dim=4, seed=1, geometry=tag)
    assert smoothness_margins(p, n_pairs=200, seed=2) <= 1 + 1e-6


@pytest.mark.parametrize("name,tag", list(cases()))
def test_minimizer_is_stationary(name, tag):
    p = make_problem(name, dim=3, seed=0, geometry=tag)
    assert dual_norm(p.grad(p.x_star), p.geometry) <= 1e-8 * max(1.0, p.L)


@pytest.mark.parametrize("name", PROBLEMS)
def test_gradient_matches_finite_differences(name):
    p = make_problem(name, dim=4, seed=0)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = p.x0.unflat(rng.standard_normal(p.x0.size))
        assert finite_diff_check(p, x, h=1e-5) <= 1e-5


def test_finite_diff_examples():
    q = make_problem("quad_iso", dim=2)
    assert finite_diff_check(q, Point.single([1.0, 0.0]), 1e-5) <= 1e-7
    r = make_problem("ripple", dim=1)
    assert finite_diff_check(r, Point.single([0.3]), 1e-5) <= 1e-6
    lg = make_problem("logistic", dim=5, seed=0)
    x = Point.single(np.random.default_rng(1).standard_normal(5))
    assert finite_diff_check(lg, x, 1e-5) <= 1e-5
    with pytest.raises(ConfigError):
        finite_diff_check(q, Point.single([1.0, 0.0]), 0.0)


def test_star_convexity_screens():
    ok, worst = star_convexity_check(make_problem("quad_iso", dim=3), n_samples=200)
    assert ok and worst >= 0
    assert star_convexity_check(make_problem("least_squares", dim=3), n_samples=200)[0]
    ok, _ = star_convexity_check(make_problem("star_1d", dim=1), n_samples=10_000, radius=20.0)
    assert ok


def test_star_1d_is_not_convex_but_flagged():
    p = make_problem("star_1d", dim=1)
    assert "star_convex_verified" in p.flags and "convex" not in p.flags
    f = lambda v: np.abs(v) * (1 - np.exp(-np.abs(v)))
    xs = np.linspace(2.5, 4.0, 50)
    assert np.min((f(xs + 1e-3) - 2 * f(xs) + f(xs - 1e-3)) / 1e-6) < 0


def test_star_1d_curvature_scan_matches_analytic_peak():
    # f''(x) = e^{-|x|}(2 - |x|), so the largest curvature is 2 at the origin
    scan = second_difference_scan(lambda v: np.abs(v) * (1 - np.exp(-np.abs(v))), -20, 20)
    xs = np.linspace(1e-6, 20, 200_001)
    analytic = np.max(np.abs(np.exp(-xs) * (2 - xs)))
    assert scan == pytest.approx(analytic, rel=1e-3)


def test_problem_errors():
    with pytest.raises(ConfigError):
        make_problem("rosenbrock")
    with pytest.raises(ConfigError):
        make_problem("quad_iso", dim=0)
    with pytest.raises(ConfigError):
        make_problem("logistic", geometry="spectral")
    with pytest.raises(ConfigError):
        make_problem("ripple", L=2.0)


@given(st.floats(0.1, 10.0), st.integers(1, 5))
def test_quad_iso_L_configurable(L, dim):
    p = make_problem("quad_iso", dim=dim, L=L)
    x = p.x0
    assert p.f(x) == pytest.approx(0.5 * L * dim)
    np.testing.assert_allclose(p.grad(x).blocks[0], L * np.ones(dim))


def test_problems_are_seed_deterministic():
    a = make_problem("least_squares", dim=4, seed=9)
    b = make_problem("least_squares", dim=4, seed=9)
    assert a.x0.allclose(b.x0) and a.x_star.allclose(b.x_star) and a.L == b.L
