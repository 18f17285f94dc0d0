import json
import subprocess
import sys

import pytest

from cscgame.analysis import NeGapReport, ne_gap_table
from cscgame.cli import main
from cscgame.harness import preset


def _quick_config(tmp_path):
    cfg = preset("fig8")
    cfg.replications = 2
    cfg.algorithm["horizon"] = 1500
    cfg.sweep["active_prob"] = [0.5, 1.0]
    path = tmp_path / "quick.json"
    path.write_text(cfg.to_json())
    return path


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", "--config", str(_quick_config(tmp_path)), "--seed", "1", "--out", str(out)]) == 0
    for name in ("config.echo.json", "summary.json", "summary.csv", "welfare_best_ne.dat"):
        assert (out / name).is_file()
    assert json.loads((out / "summary.json").read_text())["seeds"] == [1, 2]
    assert capsys.readouterr().out == ""


def test_run_preset_with_overrides(tmp_path):
    out = tmp_path / "p"
    code = main(["run", "--preset", "fig8-robust-9cell", "--seed", "3", "--replications", "1", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "config.echo.json").read_text())
    assert doc["base_seed"] == 3 and doc["replications"] == 1


def test_validate_names_bad_field(tmp_path, capsys):
    cfg = preset("fig8")
    cfg.sweep["active_prob"] = [0.5, 1.7]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert main(["validate", str(path)]) == 1
    err = capsys.readouterr().err
    assert "sweep.active_prob" in err and "1.7" in err


def test_validate_ok(tmp_path, capsys):
    path = tmp_path / "ok.json"
    path.write_text(preset("fig3").to_json())
    assert main(["validate", str(path)]) == 0
    assert "ok" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == 1


def test_report_matches_direct_table(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", "--config", str(_quick_config(tmp_path)), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", str(out), "--metric", "ne-gap"]) == 0
    printed = capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    direct = ne_gap_table({k: NeGapReport.from_dict(v) for k, v in summary["metrics"]["ne_gap"].items()})
    assert printed == direct


def test_report_summary_metric(tmp_path, capsys):
    out = tmp_path / "res"
    main(["run", "--config", str(_quick_config(tmp_path)), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out), "--metric", "summary"]) == 0
    assert "welfare/sla" in capsys.readouterr().out


def test_list(capsys):
    assert main(["list"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["fig3", "fig5", "fig7", "fig8"]


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run"], ["run", "--preset", "fig8", "--config", "x.json"],
                                  ["run", "--preset", "nope"], ["report"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_zero_jobs_rejected(tmp_path):
    assert main(["run", "--config", str(_quick_config(tmp_path)), "--jobs", "0", "--out", str(tmp_path / "x")]) == 1


def test_output_dir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv("CSCGAME_OUT", str(target))
    assert main(["run", "--config", str(_quick_config(tmp_path))]) == 0
    assert (target / "summary.json").is_file()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cscgame.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("fig3")
