import csv
import json
import math

import numpy as np
import pytest

from ttplan.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, run_cli
from ttplan.corridor import Obstacle
from ttplan.errors import ScenarioError
from ttplan.qp import load_problem
from ttplan.scenario import (FIXTURES, load_fixture, load_scenario, load_scenario_file, save_scenario,
                             scenario_to_dict, straight, uturn)
from ttplan.sqp import plan
from ttplan.vehicle import VehicleParams

MINIMAL = '{"schema_version": 1, "path": {"segments": [{"length_m": 80}]}}'


def test_minimal_document_gets_defaults():
    sc = load_scenario(MINIMAL)
    assert sc.vehicle == VehicleParams()
    assert sc.objective.kind == 3 and sc.objective.K == 0.45
    assert sc.obstacles == ()


def test_uturn_fixture():
    sc = load_fixture("uturn_0065")
    assert sc.horizon == pytest.approx(134.2)
    assert sc.ds == pytest.approx(0.2)
    assert np.max(sc.path.curvatures(np.linspace(0, sc.path.total_length, 500))) == pytest.approx(0.065)


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_round_trip(name):
    sc = load_fixture(name)
    text = save_scenario(sc)
    assert save_scenario(load_scenario(text)) == text
    assert load_scenario(text) == sc


def test_round_trip_with_obstacles_and_mirror():
    sc = uturn(0.05, half_width=7.0, obstacles=(Obstacle(70, 80, 2.0, 7.0, "right"),)).mirrored()
    back = load_scenario(save_scenario(sc))
    assert scenario_to_dict(back) == scenario_to_dict(sc)


@pytest.mark.parametrize("doc, field", [
    ('{"schema_version": 1, "path": {"segments": [{"length_m": -5}]}}', "path.segments[0].length_m"),
    ('{"schema_version": 2, "path": {"segments": [{"length_m": 5}]}}', "schema_version"),
    ('{"schema_version": 1, "path": {"segments": [{"length_m": 80, "colour": 1}]}}', "path.segments[0]"),
    ('{"schema_version": 1, "path": {"segments": []}}', "path.segments"),
    ('{"schema_version": 1, "path": {"segments": [{"length_m": 80}]}, "vehicle": "bus"}', "vehicle"),
    ('{"schema_version": 1, "path": {"segments": [{"length_m": 80}]}, "objective": {"kind": 7}}',
     "objective.kind"),
])
def test_schema_errors_name_the_field(doc, field):
    with pytest.raises(ScenarioError) as exc:
        load_scenario(doc)
    assert exc.value.field is not None and exc.value.field.startswith(field)


def test_syntax_error_reports_line():
    with pytest.raises(ScenarioError) as exc:
        load_scenario('{\n "schema_version": 1,\n "path": \n}')
    assert exc.value.line == 4


def test_unknown_fixture():
    with pytest.raises(ScenarioError):
        load_fixture("moebius")


SMALL = uturn(0.065, turn=math.pi / 3, lead_in=6.0, horizon=30.0, ds=0.5, half_width=6.0, name="small")


@pytest.fixture(scope="module")
def small_file(tmp_path_factory):
    f = tmp_path_factory.mktemp("sc") / "small.json"
    f.write_text(save_scenario(SMALL))
    return f


@pytest.fixture(scope="module")
def small_run(small_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    code = run_cli(["plan", "--scenario", str(small_file), "--objective", "3", "--K", "0.45",
                    "--out", str(out), "--dump-qp"])
    return code, out


def test_plan_writes_results(small_run):
    code, out = small_run
    assert code == EXIT_OK
    for f in ("result.json", "trajectory.csv", "plot.svg", "curvature.svg", "qp_iter1.txt"):
        assert (out / f).stat().st_size > 0
    doc = json.loads((out / "result.json").read_text())
    assert doc["converged"] and doc["objective"] == {"kind": 3, "K": 0.45, "smooth_weight": 1.0}
    rows = list(csv.reader((out / "trajectory.csv").open()))
    assert len(rows) - 1 == doc["stations"] == 61
    assert load_problem(out / "qp_iter1.txt").P.shape[0] > 0


def test_table_matches_trajectory(small_file, small_run):
    _, out = small_run
    res = plan(load_scenario_file(small_file).with_objective(3, 0.45))
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    s = np.array([float(r["s"]) for r in rows])
    ey = np.array([float(r["e_y"]) for r in rows])
    k = np.array([float(r["kappa"]) for r in rows[:-1]])
    assert rows[-1]["kappa"] == ""
    # nine significant digits
    assert np.allclose(s, res.trajectory.s, rtol=1e-8, atol=0)
    assert np.allclose(ey, res.trajectory.Z[:, 0], rtol=1e-8, atol=1e-12)
    assert np.allclose(k, res.trajectory.kappa, rtol=1e-8, atol=1e-12)


def test_outputs_are_byte_identical(small_file, small_run, tmp_path):
    _, first = small_run
    assert run_cli(["plan", "--scenario", str(small_file), "--objective", "3", "--K", "0.45",
                    "--out", str(tmp_path)]) == EXIT_OK
    for f in ("plot.svg", "curvature.svg", "trajectory.csv"):
        assert (tmp_path / f).read_bytes() == (first / f).read_bytes()


def test_not_converged_exit_code(tmp_path):
    f = tmp_path / "sc.json"
    f.write_text(save_scenario(SMALL.with_objective(2).with_planner(max_sqp_iters=1)))
    assert run_cli(["plan", "--scenario", str(f), "--out", str(tmp_path / "o")]) == EXIT_NOT_CONVERGED


def test_objective_five_warns(tmp_path, capsys):
    f = tmp_path / "st.json"
    f.write_text(save_scenario(straight(30.0)))
    assert run_cli(["plan", "--scenario", str(f), "--objective", "5", "--out", str(tmp_path)]) == EXIT_OK
    assert "objective 5" in capsys.readouterr().err


def test_fixture_name_accepted(tmp_path):
    assert run_cli(["plan", "--scenario", "straight", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["metrics"]["max_left"] == 1.27 and doc["metrics"]["area_diff"] == 0.0


@pytest.mark.parametrize("argv", [
    ["plan", "--scenario", "straight", "--bogus"],
    ["plan", "--scenario", "straight", "--seedless"],
    ["plan", "--scenario", "straight", "--objective", "9"],
    ["plan"],
    [],
])
def test_usage_errors(argv, capsys):
    assert run_cli(argv) == EXIT_ERROR
    assert capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert run_cli(["plan", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "error" in capsys.readouterr().err


def test_bad_scenario_file(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text('{"schema_version": 1, "path": {"segments": [{"length_m": -1}]}}')
    assert run_cli(["plan", "--scenario", str(f), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "length_m" in capsys.readouterr().err


def test_sweep_command(tmp_path, capsys):
    f = tmp_path / "st.json"
    f.write_text(save_scenario(straight(30.0)))
    assert run_cli(["sweep", "--scenario", str(f), "--K", "0.5", "0.2", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "sweep.json").read_text())["best_K"] == 0.2
    assert "best K = 0.2" in capsys.readouterr().out
