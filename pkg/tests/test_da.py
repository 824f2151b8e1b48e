import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from muonscale.da_muon import (
    c_alpha, da_radius_update, da_run, min_next_grad, momentum_tracking_margins, realized_radius,
    thm1_bound, tracking_bound,
)
from muonscale.errors import ConfigError
from muonscale.geometry import Geometry, Point
from muonscale.problems import make_problem

E = Geometry.of("euclidean")


def test_radius_update_examples():
    x0 = Point.single([0.0])
    assert da_radius_update(0.5, x0, x0, E) == 0.5
    assert da_radius_update(0.5, Point.single([0.7]), x0, E) == 0.7
    assert da_radius_update(0.5, Point.single([-0.5]), x0, E) == 0.5
    with pytest.raises(ConfigError):
        da_radius_update(0.0, x0, x0, E)


def test_hand_recurrence_quad_iso():
    p = make_problem("quad_iso", dim=1)
    tr = da_run(p, r=0.5, alpha=0.5, T=2)
    eta = tr.column("eta")
    assert eta[0] == pytest.approx(0.5)
    assert eta[1] == pytest.approx(0.5 / math.sqrt(2))
    assert tr.column("r_bar")[1] == 0.5
    # x1 = 0.5, m2 = 0.5*1 + 0.5*0.5 = 0.75 > 0, x2 = 0.5 - 0.5/sqrt(2)
    assert tr.final["x"].blocks[0][0] == pytest.approx(0.146447, abs=1e-6)


def test_huge_initial_radius_stays_finite():
    p = make_problem("quad_iso", dim=2)
    tr = da_run(p, r=1e6, T=20)
    assert np.all(np.isfinite(tr.column("f")))
    assert np.all(tr.column("r_bar") <= 1e6 + tr.column("dist0").max() + 1e-9)
    assert np.all(tr.column("r_bar") >= 1e6)


def test_eta_max_clamps():
    p = make_problem("ripple", dim=3, seed=1)
    tr = da_run(p, T=50, eta_max=0.05)
    assert tr.column("eta").max() <= 0.05


def test_c_alpha_and_bound_examples():
    A_half = 2 * (1 + math.sqrt(2) * math.sqrt(2 * math.pi / math.log(2)))
    assert c_alpha(0.5, 1) == pytest.approx(2 * A_half + (3.5 + 2 * math.sqrt(2)) * 1.0)
    # D = r: the (D/r)^(2/T) factor is 1 and log(e D / r) is 1
    T = 100
    expected = math.sqrt(2) / 10 + 2 * c_alpha(0.5, T) / 10
    assert thm1_bound(1.0, 1.0, 1.0, 1.0, 0.5, T) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ConfigError):
        thm1_bound(1.0, 1.0, 0.5, 1.0, 0.5, T)


def test_thm1_bound_scripted_value():
    # independent evaluation: every constant spelled out
    q = 0.5
    A = 2.0 * (1.0 + (1.0 / math.sqrt(q)) * math.sqrt(2.0 * math.pi / math.log(2.0)))
    C = 2.0 * A + (3.5 + 2.0 * math.sqrt(2.0)) * (1.0 + math.log(100.0))
    assert thm1_bound(1.0, 1.0, 1.0, 1.0, 0.5, 100) == pytest.approx(
        math.sqrt(2.0) / 10.0 + 2.0 * C / 10.0, rel=1e-13)


@given(st.integers(0, 5), st.sampled_from([0.3, 0.5, 0.9]), st.sampled_from(["ripple", "quad_iso", "star_1d"]),
       st.sampled_from(["euclidean", "linf_sign", "spectral"]))
def test_invariants_along_runs(seed, alpha, name, tag):
    p = make_problem(name, dim=3, seed=seed, geometry=tag)
    tr = da_run(p, alpha=alpha, T=60)
    rb = tr.column("r_bar")
    assert np.all(np.diff(rb) >= 0) and rb[0] >= tr.meta["r"]
    assert np.all(momentum_tracking_margins(tr, p.L, alpha) >= 0)
    D = realized_radius(tr)
    assert math.isfinite(D)
    assert min_next_grad(tr) <= thm1_bound(p.gap(tr.rows[0][1]), tr.meta["r"], D, p.L, alpha, 60)


def test_tracking_bound_at_warm_start():
    assert tracking_bound(2.0, 1.0, 0.5, 0) == pytest.approx(2.0 * (1 / 0.5 + math.sqrt(2) * 0.5 / (0.5 * math.sqrt(2))))
