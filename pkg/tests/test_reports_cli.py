from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from cutoff_formation.cli import main
from cutoff_formation.errors import CollisionError
from cutoff_formation.reports import (
    DISTANCE_COLUMNS,
    LYAPUNOV_COLUMNS,
    TRACE_COLUMNS,
    write_reports,
)
from cutoff_formation.scenario_file import builtin_scenario, dump_scenario
from cutoff_formation.simulator import run

from test_scenario_file import MINIMAL
from test_simulator import two_agents

GOLDEN = Path(__file__).parent / "golden" / "demo_trace_head.csv"


@pytest.fixture
def short_demo(tmp_path):
    sc = dataclasses.replace(builtin_scenario("demo_paper"), t_final=0.03)
    path = tmp_path / "short_demo.toml"
    path.write_text(dump_scenario(sc), encoding="utf-8")
    return path


def test_report_files_and_format(tmp_path):
    tr = run(two_agents([0, 0, 0], [1, 0, 0], t_final=0.05))
    paths = write_reports(tr, tmp_path / "out")
    assert set(paths) == {"trace", "distances", "lyapunov", "attitude", "summary", "summary_json"}
    raw = paths["trace"].read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 1 + 2 * 6
    assert lines[1].split(",")[:2] == ["0", "0"]
    dist = paths["distances"].read_text(encoding="utf-8").splitlines()
    assert dist[0] == ",".join(DISTANCE_COLUMNS) and dist[1] == "0,0,1,1"
    assert paths["lyapunov"].read_text().splitlines()[0] == ",".join(LYAPUNOV_COLUMNS)
    assert not (tmp_path / "out" / "obstacle_distances.csv").exists()
    summary = paths["summary"].read_text()
    assert "n/a (no obstacles)" in summary and "completed, no collision" in summary
    data = json.loads(paths["summary_json"].read_text())
    assert data["min_pair_distance"] == 1.0 and data["min_obstacle_distance"] is None
    assert not list((tmp_path / "out").glob(".*.tmp"))


def test_nine_significant_digits(tmp_path):
    tr = run(two_agents([0, 0, 0], [1 / 3, 2 / 3 + 0.5, 0], t_final=0.01))
    text = write_reports(tr, tmp_path)["distances"].read_text()
    value = text.splitlines()[1].split(",")[3]
    assert value == "%.9g" % np.hypot(1 / 3, 2 / 3 + 0.5)
    assert "-0," not in text


def test_halted_trace_summary(tmp_path):
    sc = two_agents([-0.8, 0, 0], [0.8, 0, 0], v0=(4, 0, 0), v1=(-4, 0, 0), t_final=2.0)
    with pytest.raises(CollisionError) as info:
        run(sc)
    paths = write_reports(info.value.trace, tmp_path)
    summary = paths["summary"].read_text()
    assert "HALTED by collision" in summary and "between 0 and 1" in summary
    assert json.loads(paths["summary_json"].read_text())["halted"] is True


def test_golden_trace_head(tmp_path, short_demo):
    assert main(["simulate", str(short_demo), "--out", str(tmp_path / "o")]) == 0
    head = (tmp_path / "o" / "trace.csv").read_text(encoding="utf-8").splitlines()[:101]
    assert head == GOLDEN.read_text(encoding="utf-8").splitlines()


def test_simulate_is_byte_identical(tmp_path, short_demo):
    for d in ("a", "b"):
        assert main(["simulate", str(short_demo), "--out", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "obstacle_distances.csv" in names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_validate_and_check_gains(capsys):
    assert main(["validate", "builtin:demo_paper"]) == 0
    assert main(["check-gains", "builtin:demo_paper", "--json"]) == 0
    report = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert report["feasible"] and report["zeta"] > 0


def test_cli_infeasible_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(MINIMAL.replace("gamma_p = 2.0", "gamma_p = 1.0"), encoding="utf-8")
    assert main(["check-gains", str(path)]) == 2
    assert "condition_p: FAIL" in capsys.readouterr().out
    assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", str(path), "--out", str(tmp_path / "o"), "--force"]) == 0


def test_cli_parse_error_exit_code(tmp_path, capsys):
    path = tmp_path / "broken.toml"
    path.write_text("[graph]\nn_agents = = 2\n", encoding="utf-8")
    assert main(["validate", str(path)]) == 1
    assert "line 2, column" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.toml")]) == 1
    assert main(["validate", "builtin:nope"]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1


def test_cli_collision_exit_code(tmp_path):
    sc = two_agents([-0.8, 0, 0], [0.8, 0, 0], v0=(4, 0, 0), v1=(-4, 0, 0), t_final=2.0)
    path = tmp_path / "crash.toml"
    path.write_text(dump_scenario(sc), encoding="utf-8")
    assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "HALTED" in (tmp_path / "o" / "summary.txt").read_text()


def test_cli_potential_table(tmp_path):
    out = tmp_path / "phi.csv"
    assert main(["potential-table", "builtin:demo_paper", "--out", str(out),
                 "--points", "5", "--d-max", "0.8"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "d,f,g,phi,dphi_dd"
    assert lines[1] == "0,0.5,0,0.5,-7.65625"
    assert lines[-1].startswith("0.8,0,1,0.001,0")
    assert main(["potential-table", "builtin:demo_paper", "--out", str(out),
                 "--pair", "0", "0"]) == 1
