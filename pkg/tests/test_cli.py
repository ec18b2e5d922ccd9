import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from titepk.cli import main
from titepk.service import DecisionTableModel

FIXTURE = Path(__file__).parent / "data" / "prior_decision_table.json"


@pytest.fixture()
def runner():
    return CliRunner()


def _write_records(path: Path, rows: str) -> Path:
    path.write_text(rows)
    return path


def test_simulate_writes_json_and_csv(runner, tmp_path):
    out = tmp_path / "study"
    result = runner.invoke(main, [
        "simulate", "--scenario", "S1", "--bound", "0.5", "--trials", "4",
        "--seed", "3", "--out", str(out), "--no-plot",
    ])
    assert result.exit_code == 0, result.output
    assert "P(select MTC in targeted toxicity interval)" in result.output
    payload = json.loads((out / "study.json").read_text())
    assert payload["config"]["scenario"] == "S1"
    assert len(payload["trials"]) == 4
    oc_csv = (out / "operating_characteristics.csv").read_text().splitlines()
    assert "p_select_tt" in oc_csv[0]
    trials_csv = (out / "trials.csv").read_text().splitlines()
    assert len(trials_csv) == 5  # header + one row per trial


def test_simulate_is_byte_deterministic(runner, tmp_path):
    args = ["simulate", "--scenario", "S2", "--bound", "0.25", "--trials", "3", "--seed", "11"]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert runner.invoke(main, args + ["--out", str(out_a)]).exit_code == 0
    assert runner.invoke(main, args + ["--out", str(out_b)]).exit_code == 0
    for name in ("study.json", "operating_characteristics.csv", "trials.csv", "selection.png"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_simulate_missing_scenario_exits_2(runner, tmp_path):
    result = runner.invoke(main, ["simulate", "--trials", "2", "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "scenario" in result.output


def test_simulate_unknown_generator_in_config(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "S1", "generator": "bogus", "trials": 2}))
    result = runner.invoke(main, ["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "generator" in result.output


def test_simulate_scenario_table_file(runner, tmp_path):
    table = tmp_path / "scen.txt"
    table.write_text("schedule 8 16 24\nA 0.1 0.2 0.3\nB 0.15 0.25 0.35\n"
                     "C 0.2 0.3 0.4\nD 0.25 0.35 0.45\n")
    out = tmp_path / "study"
    result = runner.invoke(main, [
        "simulate", "--scenario-table", str(table), "--trials", "2", "--seed", "1",
        "--out", str(out), "--no-plot",
    ])
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "study.json").read_text())
    assert payload["scenario"] == "scen"


def test_recommend_empty_records_matches_prior_fixture(runner, tmp_path):
    data = _write_records(tmp_path / "records.csv", "combination,dlt,time_hours\n")
    result = runner.invoke(main, ["recommend", "--data", str(data), "--bound", "0.25"])
    assert result.exit_code == 0, result.output
    blob = result.output[result.output.index("{"):]
    payload = json.loads(blob)
    expected = json.loads(FIXTURE.read_text())
    assert payload["recommendation"] == expected["recommendation"]
    for row, exp in zip(payload["rows"], expected["rows"]):
        assert row["p_overdosing"] == pytest.approx(exp["p_overdosing"], abs=1e-9)
        assert row["mean_dlt_prob"] == pytest.approx(exp["mean_dlt_prob"], abs=1e-9)


def test_recommend_one_dlt_raises_overdose_probabilities(runner, tmp_path):
    # An early event tilts the posterior toward larger hazards everywhere; a
    # late event would instead argue against very large hazards and can lower
    # P(OD) at low-exposure combinations, so the early case is the clean one.
    empty = _write_records(tmp_path / "none.csv", "combination,dlt,time_hours\n")
    one = _write_records(tmp_path / "one.csv",
                         "combination,dlt,time_hours\n24B,1,100\n")
    out_prior = runner.invoke(main, ["recommend", "--data", str(empty)])
    out_event = runner.invoke(main, ["recommend", "--data", str(one)])
    assert out_event.exit_code == 0, out_event.output
    prior = json.loads(out_prior.output[out_prior.output.index("{"):])
    event = json.loads(out_event.output[out_event.output.index("{"):])
    for row_p, row_e in zip(prior["rows"], event["rows"]):
        assert row_e["p_overdosing"] > row_p["p_overdosing"]


def test_recommend_json_parses_with_service_schema(runner, tmp_path):
    data = _write_records(tmp_path / "records.csv",
                          "dose,schedule,dlt,time_hours\n16,C,0,672\n8,A,1,100.5\n")
    out = tmp_path / "dec"
    result = runner.invoke(main, ["recommend", "--data", str(data), "--out", str(out),
                                  "--no-plot"])
    assert result.exit_code == 0, result.output
    model = DecisionTableModel.model_validate_json((out / "decision.json").read_text())
    assert len(model.rows) == 12
    assert (out / "decision.csv").exists()


def test_recommend_malformed_time_exits_2(runner, tmp_path):
    data = _write_records(tmp_path / "bad.csv",
                          "combination,dlt,time_hours\n8A,0,not-a-number\n")
    result = runner.invoke(main, ["recommend", "--data", str(data)])
    assert result.exit_code == 2
    assert "row 1" in result.output


def test_recommend_event_after_cycle_exits_2(runner, tmp_path):
    data = _write_records(tmp_path / "late.csv",
                          "combination,dlt,time_hours\n8A,1,700\n")
    result = runner.invoke(main, ["recommend", "--data", str(data)])
    assert result.exit_code == 2
    assert "row 1" in result.output
    assert "cycle" in result.output


def test_recommend_unknown_schedule_exits_2(runner, tmp_path):
    data = _write_records(tmp_path / "odd.csv",
                          "dose,schedule,dlt,time_hours\n8,Z,0,672\n")
    result = runner.invoke(main, ["recommend", "--data", str(data)])
    assert result.exit_code == 2
    assert "row 1" in result.output


def test_exposure_reference_final_auc_is_one(runner, tmp_path):
    out = tmp_path / "expo"
    result = runner.invoke(main, [
        "exposure", "--dose", "24", "--every-hours", "96", "--out", str(out), "--no-plot",
    ])
    assert result.exit_code == 0, result.output
    rows = (out / "exposure.csv").read_text().splitlines()
    final = float(rows[-1].split(",")[2])
    assert abs(final - 1.0) <= 1e-9


def test_exposure_daily_8mg_final_auc(runner, tmp_path):
    out = tmp_path / "expo"
    result = runner.invoke(main, [
        "exposure", "--dose", "8", "--every-hours", "24", "--out", str(out), "--no-plot",
    ])
    assert result.exit_code == 0
    payload = json.loads((out / "exposure.json").read_text())
    assert payload["cumulative_exposure"][-1] == pytest.approx(4 / 3, rel=0.05)


def test_exposure_zero_horizon_single_row(runner, tmp_path):
    out = tmp_path / "expo"
    result = runner.invoke(main, [
        "exposure", "--dose", "24", "--every-hours", "96", "--horizon-hours", "0",
        "--out", str(out), "--no-plot",
    ])
    assert result.exit_code == 0
    rows = (out / "exposure.csv").read_text().splitlines()
    assert len(rows) == 2
    assert rows[1] == "0.0,0.0,0.0"


def test_exposure_invalid_spec_exits_2(runner):
    result = runner.invoke(main, ["exposure", "--dose", "24"])
    assert result.exit_code == 2
    result = runner.invoke(main, ["exposure", "--dose", "24", "--every-hours", "-5"])
    assert result.exit_code == 2
    result = runner.invoke(main, ["exposure", "--dose", "24", "--times", "0,10,5"])
    assert result.exit_code == 2


def test_out_dir_from_environment(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("TITEPK_OUT", str(tmp_path))
    result = runner.invoke(main, [
        "simulate", "--scenario", "S1", "--bound", "0.5", "--trials", "2",
        "--seed", "1", "--no-plot", "--format", "json",
    ])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "study-S1" / "study.json").exists()
