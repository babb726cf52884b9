import json
import logging
import runpy
from pathlib import Path

import pytest
import yaml

from nrsim.cli import main, parse_formats, parse_sweep


@pytest.fixture(autouse=True)
def no_project_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("NRSIM_OUT_DIR", raising=False)


@pytest.fixture
def scenario_file(tmp_path, minimal_scenario):
    minimal_scenario["populations"][0]["count"] = 20
    minimal_scenario["populations"][0]["traffic"] = [{"kind": "poisson", "rate": 1.0}]
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(minimal_scenario))
    return path


def test_run_writes_report(tmp_path, scenario_file):
    out = tmp_path / "out"
    assert main(["run", str(scenario_file), "--seed", "7", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["eventlog.hash", "metrics.csv", "metrics.json", "summary.txt"]
    summary = (out / "summary.txt").read_text()
    assert summary.startswith("scenario: minimal\nseed: 7\n")
    assert "access_success" in summary
    assert len((out / "eventlog.hash").read_text().strip()) == 64
    assert any(r["metric"] == "access_success" for r in json.loads((out / "metrics.json").read_text()))


def test_same_seed_gives_identical_files(tmp_path, scenario_file):
    for name in ("a", "b"):
        assert main(["run", str(scenario_file), "--seed", "7", "--out", str(tmp_path / name)]) == 0
    for name in ("eventlog.hash", "metrics.csv", "metrics.json", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_out_dir_from_environment(tmp_path, scenario_file, monkeypatch):
    monkeypatch.setenv("NRSIM_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(scenario_file), "--format", "csv"]) == 0
    assert sorted(p.name for p in (tmp_path / "env").iterdir()) == ["eventlog.hash", "metrics.csv", "summary.txt"]


def test_shipped_scenario_by_name(tmp_path):
    out = tmp_path / "iot"
    assert main(["run", "massive_iot_burst", "--out", str(out)]) == 0
    assert "ra_collisions" in (out / "metrics.csv").read_text()


def test_sweep(tmp_path, scenario_file):
    out = tmp_path / "sweep"
    assert main(["run", str(scenario_file), "--out", str(out), "--sweep", "populations.ues.count=0,5"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["populations.ues.count=0", "populations.ues.count=5"]
    assert (out / "populations.ues.count=5" / "summary.txt").exists()


def test_sweep_checks_every_value_first(tmp_path, scenario_file):
    out = tmp_path / "sweep"
    assert main(["run", str(scenario_file), "--out", str(out), "--sweep", "populations.ues.count=5,-1"]) == 1
    assert not out.exists()


def test_invalid_scenario(tmp_path, minimal_scenario, capsys):
    minimal_scenario["cells"][0]["uac"] = {"entries": {7: {"barring_factor": 1.5, "barring_time": "4s"}}}
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(minimal_scenario))
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 1
    assert "cells.0.uac.entries.7.barring_factor" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()


def test_unwritable_out_dir(tmp_path, scenario_file, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(scenario_file), "--out", str(blocker / "out")]) == 1
    assert "Cannot write results" in capsys.readouterr().out


def test_validate_and_list(scenario_file, capsys):
    assert main(["validate", str(scenario_file)]) == 0
    assert "valid (1 cell(s), 1 population(s), 20 UEs)" in capsys.readouterr().out
    assert main(["scenarios"]) == 0
    listing = capsys.readouterr().out
    assert "mc_surge" in listing and "paging_storm" in listing


def test_log_level_option(scenario_file):
    assert main(["--log-level", "WARNING", "validate", str(scenario_file)]) == 0
    assert logging.getLogger().level == logging.WARNING


def test_entry_script_leaves_logging_to_the_cli():
    root = logging.getLogger()
    handlers = list(root.handlers)
    runpy.run_path(str(Path(__file__).resolve().parents[2] / "main.py"), run_name="entry")
    assert root.handlers == handlers


def test_argument_parsing():
    assert parse_formats("csv, parquet") == ["csv", "parquet"]
    assert parse_sweep("populations.A.count=0,20") == ("populations.A.count", ["0", "20"])
    with pytest.raises(SystemExit):
        main(["run", "x", "--format", "xml"])
