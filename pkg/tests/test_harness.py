import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from teleportsim import cli, harness

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "teleportsim" / "scenarios"


def test_config_round_trip():
    scen = harness.Scenario(
        name="round-trip",
        mode="monte-carlo",
        shots=123,
        seed=9,
        outputs=("fidelities", "rates"),
        protocol_mode="unconditional",
        window_ns=7.5,
        bar=False,
    )
    text = harness.emit_config_text(scen.to_values())
    back = harness.Scenario.from_values(harness.parse_config_text(text))
    assert back == scen


def test_config_parse_errors():
    with pytest.raises(harness.HarnessError):
        harness.parse_config_text("scenario.name demo")
    with pytest.raises(harness.HarnessError):
        harness.Scenario.from_values({"scenario.name": "x", "scenario.flavor": "mint"})
    with pytest.raises(harness.HarnessError):
        harness.Scenario(name="x", mode="approximate")
    with pytest.raises(harness.HarnessError):
        harness.Scenario(name="x", outputs=("plots",))


def test_config_value_coercion():
    values = harness.parse_config_text(
        "a.b = on\na.c = 7\na.d = 2.5e-3\na.e = hello\na.f = x, y\n"
    )
    assert values == {
        "a.b": True,
        "a.c": 7,
        "a.d": 2.5e-3,
        "a.e": "hello",
        "a.f": ("x", "y"),
    }


def test_shot_rng_reproducible_and_independent():
    a = harness.shot_rng(1, "scen", 5).uniform(size=4)
    b = harness.shot_rng(1, "scen", 5).uniform(size=4)
    c = harness.shot_rng(1, "scen", 6).uniform(size=4)
    d = harness.shot_rng(2, "scen", 5).uniform(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_run_scenario_deterministic(tmp_path):
    src = SCENARIOS / "monte-carlo.cfg"
    r1 = harness.run_scenario(src, tmp_path / "one", shots=300)
    r2 = harness.run_scenario(src, tmp_path / "two", shots=300)
    for f1, f2 in zip(sorted(r1.files), sorted(r2.files)):
        assert f1.read_bytes() == f2.read_bytes()


def test_run_scenario_summary_contents(tmp_path):
    report = harness.run_scenario(SCENARIOS / "experiment-conditional.cfg", tmp_path)
    summary = json.loads((tmp_path / "experiment-conditional.summary.json").read_text())
    assert summary["version"]
    assert summary["parameters"]["protocol.mode"] == "conditional"
    assert 0.65 < summary["results"]["average_fidelity"] < 0.75
    effective = tmp_path / "experiment-conditional.effective.cfg"
    back = harness.Scenario.from_values(harness.parse_config_text(effective.read_text()))
    assert back == report.scenario


def test_noiseless_scenario(tmp_path):
    report = harness.run_scenario(SCENARIOS / "noiseless.cfg", tmp_path)
    for f in report.results["fidelities"].values():
        assert f >= 1 - 1e-9


def test_link_budget_tables():
    rows = harness.link_budget_table("AB")
    assert set(rows) == {"alpha", "dark", "visibility", "double-excitation", "phase", "combined"}
    with pytest.raises(harness.HarnessError):
        harness.link_budget_table("AC")


def test_teleport_budget_table():
    scen = harness.Scenario(name="x")
    rows = harness.teleport_budget_table(scen)
    assert rows["combined"] > rows["links_only_infidelity"] > 0
    for key in ("ionization_alice", "bob_memory_storage", "charlie_readout"):
        assert rows[key] >= 0


def test_estimate_rate_limits():
    model = harness.RateModel(
        attempt_period_s=1.0,
        p_ab=1.0,
        p_bc=1.0,
        timeout=10,
        bob_accept=1.0,
        charlie_accept=1.0,
        cycle_overhead_s=0.0,
        bsm_overhead_s=0.0,
        charlie_stage_s=0.0,
        event_overhead_s=0.0,
    )
    # One attempt for each link plus one rephasing attempt period.
    assert harness.estimate_rate(model) == pytest.approx(1 / 3.0)
    with pytest.raises(harness.HarnessError):
        harness.RateModel(1.0, 0.0, 1.0, 10, 1.0, 1.0)


def test_rate_orderings():
    scen = harness.Scenario(name="rates")
    cond = harness.estimate_rate(harness.rate_model_for(scen))
    uncond = harness.estimate_rate(
        harness.rate_model_for(replace(scen, protocol_mode="unconditional"))
    )
    assert uncond >= cond
    sweep = harness.window_rate_sweep(scen, (15.0, 10.0, 7.5))
    rates = [row["rate_hz"] for row in sweep]
    assert rates[0] > rates[1] > rates[2]


def test_improvement_ladder_monotone():
    rows = harness.improvement_ladder(harness.Scenario(name="ladder"))
    fids = [row["average_fidelity"] for row in rows]
    assert all(b > a for a, b in zip(fids, fids[1:]))
    assert rows[0]["rate_hz"] > rows[1]["rate_hz"]  # readout filter costs rate


def test_correlation_tables():
    tables = harness.correlation_tables("AB")
    z = tables["herald_z"]
    assert z["01"] + z["10"] > 0.85
    aft = tables["flag_node1_aft_z"]
    assert aft["00"] == max(aft.values())


def test_cli_run_and_budget(tmp_path, capsys):
    rc = cli.main(
        ["run", str(SCENARIOS / "experiment-conditional.cfg"), "--out", str(tmp_path)]
    )
    assert rc == 0
    assert (tmp_path / "experiment-conditional.summary.json").exists()
    rc = cli.main(
        [
            "budget",
            str(SCENARIOS / "error-budget.cfg"),
            "--link",
            "AB",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    assert (tmp_path / "error-budget.budget_AB.csv").exists()
    capsys.readouterr()


def test_cli_rates_and_ladder(tmp_path, capsys):
    rc = cli.main(
        [
            "rates",
            str(SCENARIOS / "experiment-conditional.cfg"),
            "--windows",
            "15,10",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    rows = json.loads((tmp_path / "experiment-conditional.rates.json").read_text())
    assert [row["window_ns"] for row in rows] == [15.0, 10.0]
    rc = cli.main(
        ["ladder", str(SCENARIOS / "experiment-conditional.cfg"), "--out", str(tmp_path)]
    )
    assert rc == 0
    capsys.readouterr()


def test_cli_missing_file(tmp_path, capsys):
    rc = cli.main(["run", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)])
    assert rc == 2
    capsys.readouterr()


def test_monte_carlo_scenario_statistics(tmp_path):
    report = harness.run_scenario(
        SCENARIOS / "monte-carlo.cfg", tmp_path, shots=4000, seed=3
    )
    res = report.results
    assert res["total_shots"] == 4000
    assert res["accepted_shots"] == sum(
        1 for _ in range(res["accepted_shots"])
    )  # structural
    assert "bc_timeout" in res["aborts"]
