import json
import subprocess
import sys

import pytest

from losguide import save_scenario
from losguide.cli import EXIT_ERROR, EXIT_MAX_ITER, EXIT_OK, compare_tables, main
from losguide.evaluation import ResultRecord, evaluate, export_results, load_results
from tests.helpers import hover_scenario, solved


@pytest.fixture
def hover_file(tmp_path):
    path = tmp_path / "hover.json"
    save_scenario(hover_scenario(), path)
    return path


def test_solve_builtin_cinematography(tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", "--scenario", "cinematography", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["metrics"]["method"] == "ct" and doc["metrics"]["converged"]
    assert len(doc["dense"]["t"]) == 1000
    assert doc["scenario"]["name"] == "cinematography"


def test_dt_method_is_reported(hover_file, tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", "--scenario", str(hover_file), "--method", "dt", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["metrics"]["method"] == "dt"


def test_missing_scenario_file(tmp_path, caplog):
    assert main(["solve", "--scenario", str(tmp_path / "nope.json")]) == EXIT_ERROR
    assert "not found" in caplog.text


def test_iteration_cap_exit_code(tmp_path):
    out = tmp_path / "sol.json"
    code = main(["solve", "--scenario", "relative-nav", "--weights", "obj=1,tr=5", "--out", str(out)])
    assert code == EXIT_OK
    # a 1-iteration cap cannot converge from the straight-line guess
    sc_path = tmp_path / "capped.json"
    doc = json.loads(out.read_text())["scenario"]
    doc["tolerances"]["k_max"] = 1
    sc_path.write_text(json.dumps(doc))
    assert main(["solve", "--scenario", str(sc_path), "--out", str(out)]) == EXIT_MAX_ITER


def test_bad_weights_are_an_error(hover_file):
    assert main(["solve", "--scenario", str(hover_file), "--weights", "nonsense"]) == EXIT_ERROR


def test_missing_scenario_is_a_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["solve"])
    assert e.value.code == 2


def test_sweep_counts_records(hover_file, tmp_path):
    out = tmp_path / "r.csv"
    assert main(["sweep", "--scenario", str(hover_file), "--nodes", "5", "--weights", "obj1_tr5;obj0.1_tr0.5",
                 "--out", str(out)]) == EXIT_OK
    recs = load_results(out)
    assert len(recs) == 2 * 2
    assert {r.method for r in recs} == {"ct", "dt"}
    agg = (tmp_path / "r_aggregate.csv").read_text().splitlines()
    assert agg[0].startswith("method,N,count,los_vio_min,los_vio_mean,los_vio_max")
    assert len(agg) == 3


def test_sweep_json_to_stdout(hover_file, capsys):
    assert main(["sweep", "--scenario", str(hover_file), "--nodes", "5", "--weights", "obj1_tr5", "--method", "ct",
                 "--format", "json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["records"]) == 1 and doc["aggregate"][0]["count"] == 1
    assert doc["config"]["grids"] == [5]


def test_empty_grid_list(hover_file, caplog):
    assert main(["sweep", "--scenario", str(hover_file), "--nodes", ","]) == EXIT_ERROR
    assert "--nodes" in caplog.text


def test_propagate_saved_solution(hover_file, tmp_path):
    sol = tmp_path / "sol.json"
    main(["solve", "--scenario", str(hover_file), "--out", str(sol)])
    out = tmp_path / "dense.json"
    assert main(["propagate", str(sol), "--n-prop", "200", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert len(doc["dense"]["t"]) == 200 and doc["los_vio"] == 0.0


def rec(method, los_vio, runtime=1.0, iterations=4, scenario="s"):
    return ResultRecord(method, scenario, 10, "w", los_vio, 1.0, iterations, True, runtime, 0.0)


def test_identical_tables_compare_to_one():
    rows = [rec("ct", 0.3), rec("ct", 0.5)]
    out = compare_tables(rows, rows)
    assert all(out[k]["ratio"] == 1.0 for k in ("los_vio", "runtime_s", "iterations"))


def test_ratio_arithmetic():
    assert compare_tables([rec("ct", 1e-3)], [rec("dt", 1e1)])["los_vio"]["ratio"] == pytest.approx(1e4)


def test_compare_single_table_file(tmp_path, capsys):
    path = export_results([rec("ct", 1e-3, iterations=5), rec("dt", 1e1, iterations=10)], tmp_path / "t.csv")
    assert main(["compare", str(path)]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["iterations"]["ratio"] == pytest.approx(2.0)


def test_compare_mismatched_scenarios(tmp_path):
    a = export_results([rec("ct", 1.0, scenario="a")], tmp_path / "a.csv")
    b = export_results([rec("dt", 1.0, scenario="b")], tmp_path / "b.csv")
    assert main(["compare", str(a), str(b)]) == EXIT_ERROR


def test_compare_acceptance_run_iteration_ratio(tmp_path, capsys):
    # default relative-navigation cell, both methods
    recs = []
    for method in ("ct", "dt"):
        sc, traj, log = solved("relative-nav", method)
        recs.append(evaluate(sc, traj, log))
    path = export_results(recs, tmp_path / "acc.csv")
    assert main(["compare", str(path)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["iterations"]["ratio"] >= 2.0


def test_streams_are_separated(hover_file):
    proc = subprocess.run(
        [sys.executable, "-m", "losguide.cli", "-v", "sweep", "--scenario", str(hover_file), "--nodes", "5",
         "--weights", "obj1_tr5", "--method", "dt"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == EXIT_OK
    lines = proc.stdout.strip().splitlines()
    assert lines[0].startswith("method,scenario,N")
    assert len(lines) == 2
    assert "INFO" not in proc.stdout
    assert "INFO" in proc.stderr
