import csv
import json
from pathlib import Path

import pytest

from coop_odes import GeneratorConfig
from coop_odes.cli import main
from coop_odes.reports import dumps_report
from coop_odes.runner import run_fuzz
from coop_odes.scenario import SEED_ENV, load_scenario, parse_scenario, scenario_to_dict
from coop_odes.errors import DimensionMismatch, ParseError

WINDOW = {"a": -1.0, "b": 3.0, "t0": 0.0}
# M1 failures in the 100-instance non-cooperative boundary batch, default seed
NC_BOUNDARY_VIOLATIONS = 65


def _write(tmp_path, name, system, x0, checks, t_end=1.0, **extra):
    doc = {"window": WINDOW, "system": system, "x0": x0, "t_end": t_end, "checks": checks, **extra}
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return path


def _const(m):
    return {"type": "constant", "matrix": m}


@pytest.fixture
def diag_file(tmp_path):
    return _write(tmp_path, "diag", _const([[-1, 0], [0, -2]]), [1, 1], ["m2", "certificate"])


def _report(tmp_path, stem, command):
    return json.loads((tmp_path / f"{stem}.{command}.json").read_text())


def test_verify_equality_case(tmp_path, diag_file, capsys):
    assert main(["verify", str(diag_file), "--out", str(tmp_path)]) == 0
    doc = _report(tmp_path, "diag", "verify")
    assert doc["status"] == "pass" and doc["exit_code"] == 0
    cert = next(c for c in doc["checks"] if c["check"] == "certificate")
    assert cert["verdict"] == "CertifiedPositive"
    assert cert["max_abs_margin"] < 1e-8
    out = capsys.readouterr().out
    assert "m2: PASS" in out and "certificate: PASS" in out


def test_verify_non_cooperative_failure(tmp_path):
    path = _write(tmp_path, "nc", _const([[0, -2], [0, 0]]), [0, 1], ["m1"], t_end=1.5)
    assert main(["verify", str(path), "--out", str(tmp_path)]) == 1
    doc = _report(tmp_path, "nc", "verify")
    assert doc["status"] == "fail"
    assert doc["checks"][0]["worst_value"] == pytest.approx(-3.0, rel=1e-8)


def test_wrong_dimension_exits_2_without_report(tmp_path):
    path = _write(tmp_path, "bad", _const([[0, 1], [1, 0]]), [1, 1, 1], ["m1"])
    assert main(["verify", str(path), "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "bad.verify.json").exists()


@pytest.mark.parametrize(
    "doc",
    [
        {"window": WINDOW, "x0": [1], "t_end": 1.0},
        {"window": WINDOW, "system": _const([[1]]), "x0": [1], "t_end": 5.0},
        {"window": WINDOW, "system": _const([[1]]), "x0": [1], "t_end": 1.0, "checks": ["nope"]},
        {"window": {"a": 1, "b": 0, "t0": 0.5}, "system": _const([[1]]), "x0": [1], "t_end": 1.0},
    ],
)
def test_schema_errors_exit_2(tmp_path, doc):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert main(["verify", str(path), "--out", str(tmp_path)]) == 2


def test_missing_and_malformed_files(tmp_path):
    assert main(["verify", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert main(["verify", str(bad), "--out", str(tmp_path)]) == 2


def test_runtime_error_still_writes_report(tmp_path):
    path = _write(
        tmp_path,
        "tiny",
        _const([[-1, 0], [0, -2]]),
        [1, 1],
        ["m1"],
        stepper={"method": "rk45", "max_steps": 3},
    )
    assert main(["verify", str(path), "--out", str(tmp_path)]) == 2
    doc = _report(tmp_path, "tiny", "verify")
    assert doc["status"] == "error" and "StepLimitExceeded" in doc["error"]


def test_certificate_on_boundary_start_is_an_error(tmp_path):
    path = _write(tmp_path, "bd", _const([[0, 1], [1, 0]]), [1, 0], ["certificate"])
    assert main(["verify", str(path), "--out", str(tmp_path)]) == 2
    assert _report(tmp_path, "bd", "verify")["status"] == "error"


def test_report_round_trip_is_byte_identical(tmp_path, diag_file):
    main(["verify", str(diag_file), "--out", str(tmp_path)])
    text = (tmp_path / "diag.verify.json").read_text()
    assert dumps_report(json.loads(text)) == text


def test_csv_outputs(tmp_path):
    path = _write(
        tmp_path, "pr", _const([[0, 0], [0, 0]]), [1, 0], ["m1", "epsilon-probe"]
    )
    assert main(["verify", str(path), "--out", str(tmp_path), "--csv"]) == 0
    rows = list(csv.reader((tmp_path / "pr.trajectory.csv").open()))
    assert rows[0] == ["t", "x_1", "x_2", "xi", "bound", "margin"]
    assert all(len(r) == 6 for r in rows[1:])
    for r in rows[1:]:
        for v in r:
            assert float(format(float(v), ".17g")) == float(v)
    probe = list(csv.reader((tmp_path / "pr.epsilon.csv").open()))
    assert probe[0] == ["eps", "deviation"]
    assert float(probe[1][1]) == pytest.approx(0.10016675001984403, rel=1e-8)


def test_csv_uses_seventeen_digits(tmp_path):
    path = _write(tmp_path, "d", _const([[-1.0 / 3.0]]), [1.0], ["m1"])
    main(["solve", str(path), "--out", str(tmp_path), "--csv"])
    last = (tmp_path / "d.trajectory.csv").read_text().strip().splitlines()[-1]
    x = last.split(",")[1]
    assert len(x.replace(".", "").lstrip("0")) >= 16


def test_solve_report(tmp_path):
    pw = {"type": "piecewise_constant", "breakpoints": [0.5], "pieces": [[[-1.0]], [[-2.0]]]}
    path = _write(tmp_path, "pw", pw, [1.0], ["m1"])
    assert main(["solve", str(path), "--out", str(tmp_path)]) == 0
    doc = _report(tmp_path, "pw", "solve")["solve"]
    assert doc["breakpoints"] == [0.5]
    assert doc["final_trace_integral"] == pytest.approx(-1.5, abs=1e-12)


def test_check_metzler(tmp_path):
    good = _write(tmp_path, "g", _const([[-1, 2], [3, -4]]), [1, 1], ["m1"])
    bad = _write(tmp_path, "b", _const([[0, -2], [0, 0]]), [1, 1], ["m1"])
    assert main(["check-metzler", str(good), "--out", str(tmp_path)]) == 0
    assert main(["check-metzler", str(bad), "--out", str(tmp_path)]) == 1
    viol = _report(tmp_path, "b", "check-metzler")["checks"][0]["violations"]
    assert viol == [{"t": None, "i": 0, "j": 1, "value": -2.0}]


def test_oracle_compare(tmp_path):
    path = _write(tmp_path, "oc", _const([[-1, 2], [3, -4]]), [1, 2], ["m1"])
    assert main(["oracle-compare", str(path), "--out", str(tmp_path)]) == 0
    pw = {"type": "piecewise_constant", "breakpoints": [0.5], "pieces": [[[-1.0]], [[-2.0]]]}
    path = _write(tmp_path, "ocp", pw, [1.0], ["m1"])
    assert main(["oracle-compare", str(path), "--out", str(tmp_path)]) == 2


def test_probe_epsilon(tmp_path):
    path = _write(tmp_path, "pe", _const([[-1, 0.5], [0.5, -1]]), [1, 1], ["m1"])
    assert main(["probe-epsilon", str(path), "--out", str(tmp_path)]) == 0
    rows = _report(tmp_path, "pe", "probe-epsilon")["checks"][0]["rows"]
    assert [r["eps"] for r in rows] == [1e-1, 1e-2, 1e-3, 1e-4]


def test_tolerance_flags(tmp_path, diag_file):
    assert main(["verify", str(diag_file), "--out", str(tmp_path), "--rel-tol", "1e-6", "--abs-tol", "1e-9"]) == 0


def test_generated_x0_and_seed_override(tmp_path, monkeypatch):
    directive = {"generate": {"seed": 5, "stream": 2, "boundary_fraction": 0.0}}
    path = _write(tmp_path, "gen", _const([[-1, 1], [1, -1]]), directive, ["m1"])
    monkeypatch.delenv(SEED_ENV, raising=False)
    a = load_scenario(path).x0
    assert load_scenario(path).x0.tobytes() == a.tobytes()
    monkeypatch.setenv(SEED_ENV, "6")
    b = load_scenario(path).x0
    assert b.tobytes() != a.tobytes()
    monkeypatch.setenv(SEED_ENV, "5")
    assert load_scenario(path).x0.tobytes() == a.tobytes()


def test_scenario_dict_round_trip(tmp_path):
    poly = {"type": "polynomial", "coefficients": [[[1.0, 0.5], [0.0]], [[2.0], [-1.0, 0.0, 0.25]]]}
    doc = {
        "name": "rt",
        "window": WINDOW,
        "system": poly,
        "x0": [1.0, 2.0],
        "t_end": 1.0,
        "stepper": {"method": "rk4", "h": 0.01},
        "checks": ["m1", "m2"],
    }
    spec = parse_scenario(doc)
    again = parse_scenario(scenario_to_dict(spec))
    assert scenario_to_dict(again) == scenario_to_dict(spec)
    assert again.system.fingerprint == spec.system.fingerprint


def test_parse_errors_are_typed():
    with pytest.raises(DimensionMismatch):
        parse_scenario({"window": WINDOW, "system": _const([[1]]), "x0": [1, 2], "t_end": 1.0})
    with pytest.raises(DimensionMismatch):
        parse_scenario({"window": WINDOW, "system": _const([[1, 2]]), "x0": [1], "t_end": 1.0})
    with pytest.raises(ParseError):
        parse_scenario({"window": WINDOW, "system": _const([[1]]), "x0": [1], "t_end": -0.5})


def test_fuzz_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fuzz", "--count", "1", "--seed", "42", "--out", str(a)]) == 0
    assert main(["fuzz", "--count", "1", "--seed", "42", "--out", str(b)]) == 0
    assert (a / "fuzz_summary.json").read_bytes() == (b / "fuzz_summary.json").read_bytes()
    assert "fuzz: count=1 seed=42" in capsys.readouterr().out


def test_fuzz_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "77")
    main(["fuzz", "--count", "2", "--out", str(tmp_path)])
    assert json.loads((tmp_path / "fuzz_summary.json").read_text())["seed"] == 77
    main(["fuzz", "--count", "2", "--seed", "3", "--out", str(tmp_path)])
    assert json.loads((tmp_path / "fuzz_summary.json").read_text())["seed"] == 3


def test_fuzz_parallel_matches_serial():
    cfg = GeneratorConfig(seed=9)
    serial, _ = run_fuzz(6, cfg)
    parallel, _ = run_fuzz(6, cfg, workers=2)
    assert dumps_report(serial) == dumps_report(parallel)


def test_fuzz_non_cooperative_boundary_batch(tmp_path):
    code = main(["fuzz", "--count", "100", "--non-cooperative", "--boundary-fraction", "1", "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "fuzz_summary.json").read_text())
    violations = summary["m1"]["checked"] - summary["m1"]["holds"]
    assert violations == NC_BOUNDARY_VIOLATIONS
    assert violations > 0 and code == 0


def test_fuzz_rejects_bad_arguments(tmp_path):
    assert main(["fuzz", "--count", "0", "--out", str(tmp_path)]) == 2
    assert main(["fuzz", "--count", "1", "--boundary-fraction", "2", "--out", str(tmp_path)]) == 2
    with pytest.raises(ValueError):
        run_fuzz(0)



SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.mark.parametrize("name, code", [("diagonal", 0), ("non_cooperative", 1), ("switching", 0)])
def test_bundled_scenarios(tmp_path, name, code):
    assert main(["verify", str(SCENARIO_DIR / f"{name}.json"), "--out", str(tmp_path)]) == code
