import json
import subprocess
import sys

import numpy as np
import pytest

from lorlab.cli import SCHEMA, dump_report, main, plain
from lorlab.grid import CSV_HEADER

TIMESEP = """experiment = timesep
model.name = minkowski
grid.shape = 60,60
grid.box = 0,2; -1,1
points.x = 0,0
points.y = 2,1
q = 0.5,-1
expect.ell = 1.7320508075688772
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_pass_writes_report_fields_and_timings(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["timesep", "--config", write(tmp_path, TIMESEP), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == SCHEMA
    assert report["verdict"] == "pass"
    assert report["tool"]["name"] == "lorlab"
    assert report["config"]["points.y"] == [2.0, 1.0]
    for check in report["checks"]:
        assert {"measured", "tolerance", "passed"} <= set(check)
    assert "seconds" in json.loads((out / "timings.json").read_text())
    csv = (out / "ell_from_x.csv").read_text().splitlines()
    assert csv[0] == CSV_HEADER and csv[1] == "x0,x1,value,mask"
    assert "timesep: pass" in capsys.readouterr().out


def test_check_failure_exit_code(tmp_path):
    text = TIMESEP.replace("expect.ell = 1.7320508075688772", "expect.ell = 1.5")
    out = tmp_path / "out"
    assert main(["timesep", "--config", write(tmp_path, text), "--out", str(out)]) == 1
    assert json.loads((out / "report.json").read_text())["verdict"] == "fail"


def test_expect_negative_inverts_primary_check(tmp_path):
    text = TIMESEP.replace("expect.ell = 1.7320508075688772", "expect.ell = 1.5")
    out = tmp_path / "out"
    assert main(["timesep", "--config", write(tmp_path, text), "--out", str(out), "--expect-negative"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["expect_negative"] is True
    primary = [c for c in report["checks"] if c["primary"]][0]
    assert primary["passed"] is False and primary["counted_as_passed"] is True
    # a correct result under --expect-negative is a failure
    assert main(["timesep", "--config", write(tmp_path, TIMESEP, "ok.cfg"), "--out", str(out),
                 "--expect-negative"]) == 1


def test_usage_errors_exit_2(tmp_path):
    out = tmp_path / "out"
    assert main(["timesep", "--config", write(tmp_path, "experiment = timesep\nmodel.name = minkowski\np = 2"),
                 "--out", str(out)]) == 2
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "error"
    assert "line 3" in report["error"]["message"]
    assert main(["timesep", "--config", str(tmp_path / "missing.cfg"), "--out", str(out)]) == 2
    assert main(["nosuch", "--config", "x"]) == 2
    assert main(["timesep"]) == 2
    assert main(["timesep", "--config", write(tmp_path, TIMESEP, "t.cfg"), "--out", str(out),
                 "--threads", "0"]) == 2


def test_module_errors_exit_1(tmp_path):
    text = "experiment = seccheck\nmodel.name = flrw\nmodel.n = 2\nsec.point = 1,0\nsec.v = 0,1\n"
    out = tmp_path / "out"
    assert main(["seccheck", "--config", write(tmp_path, text), "--out", str(out)]) == 1
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "error"
    assert report["error"]["type"] == "DomainError"


def test_points_outside_grid_are_usage_errors(tmp_path):
    text = TIMESEP.replace("points.y = 2,1", "points.y = 3,1")
    assert main(["timesep", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_internal_errors_exit_3(tmp_path, monkeypatch):
    import lorlab.cli as cli

    def boom(cfg, threads):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli, "run_experiment", boom)
    out = tmp_path / "out"
    assert main(["timesep", "--config", write(tmp_path, TIMESEP), "--out", str(out)]) == 3
    report = json.loads((out / "report.json").read_text())
    assert report["error"]["type"] == "RuntimeError"


def test_non_finite_values_serialise():
    text = dump_report({"a": float("inf"), "b": -np.inf, "c": np.float64("nan"), "d": np.arange(2)})
    assert json.loads(text) == {"a": "inf", "b": "-inf", "c": "nan", "d": [0, 1]}
    assert plain((np.bool_(True), np.int64(3))) == [True, 3]


def test_console_script_and_env_threads(tmp_path):
    cfg = write(tmp_path, TIMESEP)
    runs = []
    for threads in ("1", "3"):
        out = tmp_path / f"o{threads}"
        proc = subprocess.run(
            [sys.executable, "-m", "lorlab.cli", "timesep", "--config", cfg, "--out", str(out)],
            env={"LORLAB_THREADS": threads, "PATH": ""}, capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        runs.append((out / "report.json").read_bytes())
    assert runs[0] == runs[1]
