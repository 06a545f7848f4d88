import pytest

from town_sim.database import RunRegistry
from town_sim.engine.event_log import EventKind, EventLog


@pytest.fixture
def registry(tmp_path):
    registry = RunRegistry(f"sqlite:///{tmp_path / 'runs.db'}")
    yield registry
    registry.close_connection()


def _start(registry, seed=42):
    return registry.start_run(
        name="tiny-town",
        scenario_path="scenarios/tiny.yaml",
        seed=seed,
        mode="deterministic",
        backend="oracle",
        start_timestamp=1000.0,
    )


def test_run_lifecycle(registry):
    run_id = _start(registry)
    assert run_id is not None
    assert registry.get_runs()["status"].tolist() == ["running"]

    assert registry.finish_run(run_id, 1010.0, "aborted")
    runs = registry.get_runs()
    assert runs["status"].tolist() == ["aborted"]
    assert runs["end_timestamp"].tolist() == [1010.0]
    assert runs["seed"].tolist() == ["42"]


def test_finishing_an_unknown_run(registry):
    assert not registry.finish_run(99, 1010.0, "completed")


def test_events_are_stored_in_log_order(registry):
    first = _start(registry)
    second = _start(registry, seed=7)
    log = EventLog()
    log.append(1, 7, "Ann", EventKind.MEAL, {"meal": "breakfast", "source": "home"})
    log.append(1, 8, None, EventKind.SLEEP)
    assert registry.store_events(first, log)
    assert registry.store_events(second, EventLog())

    events = registry.get_events(first)
    assert events["seq"].tolist() == [0, 1]
    assert events["kind"].tolist() == ["meal", "sleep"]
    assert events["payload"].iloc[0] == '{"meal": "breakfast", "source": "home"}'
    assert registry.get_events(second).empty


def test_database_url_is_required(monkeypatch):
    monkeypatch.setattr("town_sim.database.SIMULATION_DATABASE_URL", None)
    with pytest.raises(ValueError):
        RunRegistry()
