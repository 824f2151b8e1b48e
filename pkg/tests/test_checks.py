import time

import pytest

from muonscale.checks import SUITES, inject_fault, run_suite


def test_all_suites_pass_within_budget():
    t0 = time.perf_counter()
    results = run_suite("all")
    elapsed = time.perf_counter() - t0
    failed = [r.line() for r in results if not r.passed]
    assert not failed, failed
    assert elapsed < 300
    names = " ".join(r.name for r in results)
    for lemma in ("Momentum tracking", "Certified descent", "Momentum-error recursion", "Lyapunov descent",
                  "Gap-to-certificate relation", "Validity of the D-certificate",
                  "One-step majorized inequality", "LMO pairing identity"):
        assert lemma in names


@pytest.mark.parametrize("suite", ["da", "sc", "df"])
def test_negated_lmo_is_caught_by_every_algorithm_suite(suite):
    results = run_suite(suite, fault="negate-lmo")
    assert any(not r.passed and r.name == "Trust-region optimality identity" for r in results)


def test_unknown_suite_and_fault():
    with pytest.raises(ValueError):
        run_suite("everything")
    with pytest.raises(ValueError):
        with inject_fault("flip-bits"):
            pass
    assert "all" in SUITES
