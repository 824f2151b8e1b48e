import csv
import io
import json
import math

import pytest

from muonscale import harness
from muonscale.checks import CheckResult, run_suite
from muonscale.harness import RunConfig, config_from_mapping, main


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_da_rows_match_hand_recurrence(capsys):
    code, out, _ = run_cli(["run", "--algo", "da", "--problem", "quad_iso", "--dim", "1", "--r0", "0.5",
                            "--alpha", "0.5", "--T", "2"], capsys)
    assert code == 0
    r = rows(out)
    assert len(r) == 2
    assert float(r[0]["eta"]) == 0.5 and float(r[0]["f"]) == 0.5
    assert float(r[1]["eta"]) == pytest.approx(0.5 / math.sqrt(2))
    assert float(r[1]["f"]) == 0.125


def test_sc_halts_at_optimum(capsys):
    code, out, _ = run_cli(["run", "--algo", "sc", "--problem", "quad_iso", "--dim", "1", "--T", "3"], capsys)
    r = rows(out)
    assert code == 0 and float(r[1]["f"]) == 0.0 and float(r[1]["eta"]) == 0.0


@pytest.mark.parametrize("args", [
    ["run", "--T", "0"],
    ["run", "--algo", "sc", "--eta", "0.1"],
    ["run", "--algo", "da", "--bigM", "6"],
    ["run", "--problem", "nope"],
    ["run", "--algo", "df_practical", "--problem", "quad_iso"],
    ["run", "--algo", "df", "--bigM", "3"],
    ["rates", "--algo", "sc", "--T", "32,64,128"],
    ["sweep", "--grid", "eta"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(args, capsys):
    code, _, err = run_cli(args, capsys)
    assert code == 2 and "usage error" in err


def test_config_file_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algo": "df", "problem": "least_squares", "dim": 3, "T": 4, "alpha": 0.8}))
    code, out, _ = run_cli(["run", "--config", str(cfg), "--T", "6"], capsys)
    assert code == 0 and len(rows(out)) == 6
    cfg.write_text(json.dumps({"algo": "df", "T": 4, "learning_rate": 0.1}))
    code, _, err = run_cli(["run", "--config", str(cfg)], capsys)
    assert code == 2 and "learning_rate" in err
    cfg.write_text(json.dumps({"algo": "df", "nested": {"a": 1}}))
    assert run_cli(["run", "--config", str(cfg)], capsys)[0] == 2


def test_lambda_key_roundtrip():
    c = config_from_mapping({"algo": "df", "lambda": 2.0})
    assert c.lambda_ == 2.0 and c.params() == {"lambda": 2.0}


def test_output_file_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / f"{i}.csv" for i in range(2)]
    for p in paths:
        assert main(["run", "--algo", "df", "--problem", "logistic", "--dim", "4", "--seed", "3",
                     "--T", "40", "--omega", "normalized", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_bytes().count(b"\n") == 41


def test_divergence_exit_code(monkeypatch, capsys):
    from muonscale.errors import DivergenceError

    def boom(cfg):
        raise DivergenceError(3, float("nan"))

    monkeypatch.setattr(harness, "execute", boom)
    code, _, err = run_cli(["run"], capsys)
    assert code == 3 and "step 3" in err


def test_invariant_exit_code(capsys):
    from muonscale import geometry as geo
    original = geo.lmo_ascent
    geo.lmo_ascent = lambda m, g: -original(m, g)
    try:
        code, _, err = run_cli(["run", "--algo", "fixed", "--T", "3"], capsys)
    finally:
        geo.lmo_ascent = original
    assert code == 4 and "Trust-region optimality identity" in err


def test_check_geometry_passes(capsys):
    code, out, _ = run_cli(["check", "--suite", "geometry"], capsys)
    assert code == 0 and "FAIL" not in out and "PASS" in out


def test_check_reports_injected_fault(capsys):
    code, out, err = run_cli(["check", "--suite", "sc", "--inject-fault", "negate-lmo"], capsys)
    assert code == 1
    assert "FAIL  Trust-region optimality identity" in out and "step=0" in out
    assert "Trust-region optimality identity" in err


def test_fault_injection_is_undone():
    run_suite("da", fault="negate-lmo")
    assert all(r.passed for r in run_suite("geometry"))


def test_rates_and_exclusion(capsys):
    code, out, err = run_cli(["rates", "--algo", "sc", "--problem", "quad_iso", "--dim", "1",
                              "--T", "4,8,16,32"], capsys)
    # quad_iso is solved exactly in one SC step, so every horizon is excluded
    assert code == 2 and "excluded [4, 8, 16, 32]" in err
    code, out, err = run_cli(["rates", "--algo", "fixed", "--problem", "least_squares", "--dim", "4",
                              "--eta", "0.01", "--T", "16,32,64,128"], capsys)
    assert code == 0
    (row,) = rows(out)
    assert row["horizons"] == "16;32;64;128" and float(row["slope"]) < 0


def test_sweep_rows(capsys):
    code, out, _ = run_cli(["sweep", "--algo", "fixed", "--problem", "quad_iso", "--T", "10",
                            "--grid", "eta=0.1,0.2", "--grid", "alpha=0.5,1.0", "--seeds", "0,1"], capsys)
    r = rows(out)
    assert code == 0 and len(r) == 8
    assert {(x["eta"], x["alpha"]) for x in r} == {("0.1", "0.5"), ("0.1", "1.0"), ("0.2", "0.5"), ("0.2", "1.0")}


def test_practical_run_via_cli(capsys):
    code, out, _ = run_cli(["run", "--algo", "df_practical", "--problem", "tiny_mlp", "--T", "20",
                            "--eta-max", "0.02"], capsys)
    r = rows(out)
    assert code == 0 and len(r) == 20
    assert max(float(x["base_scale"]) for x in r) <= 0.02


def test_check_result_line():
    assert CheckResult("x", False, -1.0, 4).line().startswith("FAIL  x  worst_margin=-1.000e+00 step=4")


def test_runconfig_defaults_validate():
    assert RunConfig().validate().algo == "sc"
