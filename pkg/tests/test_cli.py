import json
from pathlib import Path

import pytest

from town_sim import config
from town_sim.analytics.reports import (
    CHOICE_MATRIX_CSV,
    DAILY_SALES_CSV,
    MARKET_SHARE_CSV,
    SUBSTITUTION_JSON,
    SUMMARY_JSON,
)
from town_sim.cli import (
    EVENTS_FILE,
    EXIT_BACKEND,
    EXIT_OK,
    EXIT_SCENARIO,
    EXIT_USAGE,
    FINAL_STATE_FILE,
    MEMORIES_FILE,
    main,
)
from town_sim.database import RunRegistry
from town_sim.world.loader import dump_scenario, scenario_from_dict

REFERENCE = Path(__file__).resolve().parent.parent / "scenarios" / "reference.yaml"

OUTPUTS = (
    EVENTS_FILE,
    MEMORIES_FILE,
    FINAL_STATE_FILE,
    DAILY_SALES_CSV,
    MARKET_SHARE_CSV,
    CHOICE_MATRIX_CSV,
    SUMMARY_JSON,
)


@pytest.fixture(autouse=True)
def no_database(monkeypatch):
    monkeypatch.setattr(config, "SIMULATION_DATABASE_URL", None)


@pytest.fixture
def tiny_yaml(tiny_town, tmp_path):
    path = tmp_path / "tiny.yaml"
    dump_scenario(tiny_town, path)
    return path


@pytest.fixture
def tiny_baseline_yaml(tiny_town_dict, tmp_path):
    del tiny_town_dict["shops"]["Diner"]["discount_schedule"]
    path = tmp_path / "tiny_baseline.yaml"
    dump_scenario(scenario_from_dict(tiny_town_dict), path)
    return path


def test_validate(capsys):
    assert main(["validate", "--scenario", str(REFERENCE)]) == EXIT_OK
    assert "reference-town: 10 locations, 4 shops, 11 agents" in capsys.readouterr().out


def test_validate_rejects_a_broken_scenario(tmp_path, capsys):
    path = tmp_path / "broken.yaml"
    path.write_text("name: x\nagents: []\n", encoding="utf-8")
    assert main(["validate", "--scenario", str(path)]) == EXIT_SCENARIO
    assert "map" in capsys.readouterr().err


def test_usage_errors_exit_with_one():
    with pytest.raises(SystemExit) as e:
        main(["dance"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == EXIT_USAGE


def test_run_writes_every_output(tiny_yaml, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(tiny_yaml), "--out", str(out)]) == EXIT_OK
    for name in OUTPUTS:
        assert (out / name).exists(), name
    with (out / FINAL_STATE_FILE).open(encoding="utf-8") as f:
        state = json.load(f)
    assert state["completed"]
    assert [a["name"] for a in state["agents"]] == ["Ann", "Bo"]


def test_same_seed_gives_byte_identical_outputs(tiny_yaml, tmp_path):
    for run_dir in ("a", "b"):
        code = main(
            ["run", "--scenario", str(tiny_yaml), "--out", str(tmp_path / run_dir), "--seed", "3"]
        )
        assert code == EXIT_OK
    for name in OUTPUTS:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_overrides(tiny_yaml, tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(tiny_yaml), "--out", str(out), "--days", "1"])
    assert code == EXIT_OK
    lines = (out / EVENTS_FILE).read_text(encoding="utf-8").splitlines()
    assert {json.loads(line)["day"] for line in lines} == {1}


def test_zero_days_writes_empty_reports(tiny_yaml, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(tiny_yaml), "--out", str(out), "--days", "0"]) == EXIT_OK
    assert (out / EVENTS_FILE).read_text(encoding="utf-8") == ""
    with (out / SUMMARY_JSON).open(encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["days"] == 0
    assert summary["purchases"] == 0


def test_negative_days_is_a_scenario_error(tiny_yaml, tmp_path):
    code = main(["run", "--scenario", str(tiny_yaml), "--out", str(tmp_path), "--days", "-1"])
    assert code == EXIT_SCENARIO


def test_missing_scenario_file(tmp_path):
    code = main(["run", "--scenario", str(tmp_path / "nowhere.yaml"), "--out", str(tmp_path)])
    assert code == EXIT_SCENARIO


def test_unconfigured_remote_backend(tiny_yaml, tmp_path, monkeypatch):
    monkeypatch.setattr(config, "TOWN_LLM_ENDPOINT", None)
    monkeypatch.setattr(config, "TOWN_LLM_MODEL", None)
    code = main(
        ["run", "--scenario", str(tiny_yaml), "--out", str(tmp_path), "--backend", "remote"]
    )
    assert code == EXIT_BACKEND


def test_compare_promotion_with_baseline(tiny_yaml, tiny_baseline_yaml, tmp_path):
    assert main(["run", "--scenario", str(tiny_baseline_yaml), "--out", str(tmp_path / "base")]) == 0
    assert main(["run", "--scenario", str(tiny_yaml), "--out", str(tmp_path / "promo")]) == 0

    assert main(["compare", str(tmp_path / "base"), str(tmp_path / "promo")]) == EXIT_OK
    with (tmp_path / "promo" / SUBSTITUTION_JSON).open(encoding="utf-8") as f:
        report = json.load(f)
    assert report["discounted_shop"] == "Diner"
    assert report["discount_days"] == [2]
    assert report["days"] == 2
    assert isinstance(report["substitution_dominant"], bool)


def test_compare_a_run_with_itself(tiny_yaml, tmp_path):
    run_dir = tmp_path / "promo"
    main(["run", "--scenario", str(tiny_yaml), "--out", str(run_dir)])
    assert main(["compare", str(run_dir), str(run_dir), "--out", str(tmp_path / "cmp")]) == 0
    with (tmp_path / "cmp" / SUBSTITUTION_JSON).open(encoding="utf-8") as f:
        report = json.load(f)
    assert report["total_change"] == 0.0
    assert not report["substitution_dominant"]


def test_compare_runs_of_different_length(tiny_yaml, tmp_path):
    main(["run", "--scenario", str(tiny_yaml), "--out", str(tmp_path / "short"), "--days", "1"])
    main(["run", "--scenario", str(tiny_yaml), "--out", str(tmp_path / "long")])
    assert main(["compare", str(tmp_path / "short"), str(tmp_path / "long")]) == EXIT_USAGE


def test_replay_recomputes_the_reports(tiny_yaml, tmp_path):
    out = tmp_path / "out"
    main(["run", "--scenario", str(tiny_yaml), "--out", str(out)])
    summary = (out / SUMMARY_JSON).read_bytes()
    (out / SUMMARY_JSON).unlink()

    code = main(["replay", "--log", str(out / EVENTS_FILE), "--scenario", str(tiny_yaml)])
    assert code == EXIT_OK
    assert (out / SUMMARY_JSON).read_bytes() == summary


def test_replay_of_a_malformed_log(tmp_path, capsys):
    path = tmp_path / EVENTS_FILE
    path.write_text('{"day": 1}\n', encoding="utf-8")
    assert main(["replay", "--log", str(path)]) == EXIT_USAGE
    assert "Line 1" in capsys.readouterr().err


def test_run_is_recorded_in_the_database(tiny_yaml, tmp_path):
    url = f"sqlite:///{tmp_path / 'runs.db'}"
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(tiny_yaml), "--out", str(out), "--database-url", url]) == 0

    registry = RunRegistry(url)
    runs = registry.get_runs()
    assert list(runs["status"]) == ["completed"]
    assert runs["name"].iloc[0] == "tiny-town"
    events = registry.get_events(int(runs["id"].iloc[0]))
    lines = (out / EVENTS_FILE).read_text(encoding="utf-8").splitlines()
    assert len(events) == len(lines)
    registry.close_connection()
