import csv
import json

import pytest  # type: ignore

from .cli import EXIT_BAD_INPUT, EXIT_FAILED, EXIT_OK, main, parse_profile, resolve_threads
from .errors import ConfigError
from .gfld import read_field


def write_config(directory, **changes):
    obj = {
        "physics": "conductivity",
        "grid": {"dim": 2, "resolution": 8},
        "geometry": {"kind": "checkerboard"},
        "phases": [{"sigma": 4.0}, {"sigma": 1.0}],
        "applied_field": [1.0, 0.0],
    }
    obj.update(changes)
    path = directory / "run.json"
    path.write_text(json.dumps(obj), encoding="UTF-8")
    return path


def test_catalog_as_json(capsys):
    assert main(["catalog", "--json"]) == EXIT_OK
    entries = json.loads(capsys.readouterr().out)
    tags = {entry["tag"] for entry in entries}
    assert len(tags) >= 11
    assert {"conductivity", "elasticity", "graphene", "oseen"} <= tags
    assert all(entry["gamma"] for entry in entries)


def test_catalog_as_text(capsys):
    assert main(["catalog"]) == EXIT_OK
    assert "thermoelasticity" in capsys.readouterr().out


def test_solve_writes_fields_and_report(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    argv = ["solve", "--config", str(config), "--out", str(out), "--profile", "axis=1"]
    assert main(argv) == EXIT_OK
    E = read_field(out / "E.gfld")
    assert E.grid.samples == (8, 8)
    assert read_field(out / "J.gfld").layout == E.layout
    report = json.loads((out / "report.json").read_text())
    assert report["report"]["converged"]
    assert report["problem"]["physics"] == "conductivity"

    with open(out / "profile-axis1.csv", newline="") as profile:
        rows = list(csv.reader(profile))
    assert rows[0][:3] == ["x", "E.E[0].re", "E.E[0].im"]
    assert len(rows) == 1 + 8


def test_infinite_body_solve_without_applied_field(tmp_path):
    config = write_config(
        tmp_path,
        applied_field=None,
        source={"kind": "modes", "modes": [{"index": [1, 0], "amplitude": [1.0, 0.0]}]},
    )
    assert main(["solve", "--config", str(config), "--out", str(tmp_path)]) == EXIT_OK


def test_deterministic_reports_are_byte_identical(tmp_path):
    config = write_config(tmp_path)
    for name in ("a", "b"):
        argv = ["solve", "--config", str(config), "--out", str(tmp_path / name), "--deterministic"]
        assert main(argv) == EXIT_OK
    first = (tmp_path / "a" / "report.json").read_bytes()
    assert first == (tmp_path / "b" / "report.json").read_bytes()
    assert b"wall_time" not in first
    assert (tmp_path / "a" / "E.gfld").read_bytes() == (tmp_path / "b" / "E.gfld").read_bytes()


def test_malformed_config_is_bad_input(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text('{"physics": "conductivity",', encoding="UTF-8")
    assert main(["solve", "--config", str(config)]) == EXIT_BAD_INPUT
    assert "error:" in capsys.readouterr().err


def test_bad_tolerance_is_bad_input(tmp_path):
    config = write_config(tmp_path)
    argv = ["solve", "--config", str(config), "--out", str(tmp_path), "--tol", "2"]
    assert main(argv) == EXIT_BAD_INPUT


def test_unconverged_solve_exits_with_failure(tmp_path):
    config = write_config(tmp_path, grid={"dim": 2, "resolution": 32}, solver={"max_iterations": 1})
    assert main(["solve", "--config", str(config), "--out", str(tmp_path)]) == EXIT_FAILED
    assert not json.loads((tmp_path / "report.json").read_text())["report"]["converged"]


def test_homogenize_writes_the_effective_tensor(tmp_path):
    config = write_config(tmp_path, dump_columns=True)
    argv = ["homogenize", "--config", str(config), "--out", str(tmp_path), "--threads", "2"]
    assert main(argv) == EXIT_OK
    result = json.loads((tmp_path / "effective.json").read_text())
    L_star = result["response"]["L_star"]
    assert len(L_star) == 2
    assert L_star[0][0][0] == pytest.approx(L_star[1][1][0], rel=1e-8)
    assert result["response"]["basis"] == ["E[0]", "E[1]"]
    assert (tmp_path / "column-1-J.gfld").exists()


def test_homogenize_reports_derived_thermoelastic_moduli(tmp_path):
    config = write_config(
        tmp_path,
        physics="thermoelasticity",
        phases=[
            {"bulk": 1.0, "shear": 0.6, "thermal_expansion": 1e-2, "heat_capacity": 1.0},
            {"bulk": 3.0, "shear": 1.5, "thermal_expansion": 2e-3, "heat_capacity": 1.0},
        ],
        applied_field=None,
    )
    assert main(["homogenize", "--config", str(config), "--out", str(tmp_path)]) == EXIT_OK
    derived = json.loads((tmp_path / "effective.json").read_text())["derived"]
    assert 1.0 < derived["bulk_modulus"] < 3.0
    assert 2e-3 < derived["thermal_expansion"] < 1e-2


def test_verify_unknown_suite(capsys):
    assert main(["verify", "astrology"]) == EXIT_BAD_INPUT
    assert "unknown suite" in capsys.readouterr().err


def test_verify_writes_its_report(tmp_path, capsys):
    assert main(["verify", "closure", "--resolution", "16", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "verify-closure.json").read_text())
    assert report["passed"]
    assert "ok" in capsys.readouterr().out


def test_verify_takes_resolution_from_a_config(tmp_path, capsys):
    config = write_config(tmp_path, grid={"dim": 2, "resolution": 16})
    assert main(["verify", "closure", "--config", str(config), "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["suite"] == "closure"


def test_threads_come_from_the_flag_or_the_environment(monkeypatch):
    monkeypatch.delenv("GAMMAKIT_THREADS", raising=False)
    assert resolve_threads(None) is None
    assert resolve_threads(4) == 4
    monkeypatch.setenv("GAMMAKIT_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.setenv("GAMMAKIT_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None)
    with pytest.raises(ConfigError):
        resolve_threads(0)


@pytest.mark.parametrize("text", ["axis=0", "axis=3", "x=1", "axis=one"])
def test_bad_profiles(text):
    with pytest.raises(ConfigError):
        parse_profile(text, 2)


def test_profile_axes_are_one_based():
    assert parse_profile("axis=2", 2) == 1
