from collections import defaultdict

import pytest

from town_sim.analytics.sales import daily_sales, purchases_frame
from town_sim.decision.context import PromptKind
from town_sim.decision.oracle import ScriptedOracle
from town_sim.economy.pricing import parse_cents
from town_sim.engine.clock import SimClock
from town_sim.engine.event_log import EventKind
from town_sim.engine.simulator import Simulator, run
from town_sim.exception import BackendUnavailableException
from town_sim.memory.commitments import CommitmentStatus
from town_sim.world.scenario import RunMode


def _with(scenario, **sim):
    return scenario._replace(sim=scenario.sim.model_copy(update=sim))


def _oracle(scenario):
    return ScriptedOracle(scenario.sim.seed, scenario.sim.oracle)


class BreakfastPlanner(ScriptedOracle):
    """
    Oracle decisions, but the first conversation of the run sets up breakfast at the
    Diner the next morning.
    """

    def __init__(self, seed):
        super().__init__(seed)
        self.conversations = 0

    def converse(self, context, prompt=None):
        self.conversations += 1
        if self.conversations > 1:
            return {"dialogue": [{"speaker": context.initiator, "text": "Hi again."}]}
        return {
            "dialogue": [
                {"speaker": context.initiator, "text": "Breakfast at the Diner at 8?"},
                {"speaker": context.partner, "text": "See you there."},
            ],
            "intents": [
                {
                    "kind": "commitment",
                    "parties": [context.initiator, context.partner],
                    "action": "breakfast",
                    "location": "Diner",
                    "time": 8,
                    "day_offset": 1,
                }
            ],
        }


def test_same_seed_gives_identical_logs(tiny_town):
    first = run(tiny_town, _oracle(tiny_town))
    second = run(tiny_town, _oracle(tiny_town))
    assert first.completed
    assert len(first.event_log) > 0
    assert first.event_log.to_lines() == second.event_log.to_lines()
    assert first.memory_lines() == second.memory_lines()
    assert first.final_states() == second.final_states()


def test_log_is_ordered(tiny_town):
    result = run(tiny_town, _oracle(tiny_town))
    events = result.event_log.events
    assert [e.seq for e in events] == list(range(len(events)))
    times = [(e.day, e.tick) for e in events]
    assert times == sorted(times)


def test_zero_days_gives_an_empty_log(tiny_town):
    result = run(_with(tiny_town, days=0), _oracle(tiny_town))
    assert len(result.event_log) == 0
    assert result.positions == {"Ann": "Home", "Bo": "Home"}
    assert [s["energy"] for s in result.final_states()] == [100, 100]


def _money_ledger(result, scenario):
    expected = {p.name: p.starting_money for p in scenario.personas}
    for event in result.event_log:
        if event.kind == EventKind.INCOME.value:
            expected[event.agent] += parse_cents(event.payload["amount"])
        elif event.kind == EventKind.PURCHASE.value:
            expected[event.agent] -= parse_cents(event.payload["final_price"])
    return expected


def test_money_is_conserved(reference_scenario):
    scenario = _with(reference_scenario, days=3)
    result = run(scenario, _oracle(scenario))
    expected = _money_ledger(result, scenario)
    for name, agent in result.agents.items():
        assert agent.needs.money == expected[name]
        assert agent.needs.money >= 0


def test_energy_stays_in_range_and_resets_at_night(tiny_town):
    result = run(tiny_town, _oracle(tiny_town))
    decisions = result.event_log.of_kind(EventKind.DECISION)
    assert decisions
    assert all(0 <= e.payload["energy"] <= 100 for e in decisions)
    sleeps = result.event_log.of_kind(EventKind.SLEEP)
    assert len(sleeps) == 2 * tiny_town.sim.days
    assert all(e.payload["energy_after"] == 100 for e in sleeps)
    assert all(e.payload["location"] == "Home" for e in sleeps)


def test_purchases_follow_the_discount_schedule(tiny_town):
    result = run(tiny_town, _oracle(tiny_town))
    purchases = purchases_frame(result.event_log)
    plates = purchases[purchases["item"] == "plate"]
    assert not plates.empty
    for row in plates.itertuples(index=False):
        assert row.final_price == (500 if row.day == 2 else 1000)


def test_every_purchase_is_grounded(reference_scenario):
    scenario = _with(reference_scenario, days=2)
    result = run(scenario, _oracle(scenario))
    shops = scenario.town_map.shops
    for event in result.event_log.of_kind(EventKind.PURCHASE):
        shop = shops[event.payload["shop"]]
        assert shop.menu_item(event.payload["item"]) is not None
        start, end = shop.opening_hours
        assert start <= event.tick < end


def test_commitment_is_kept(tiny_town):
    result = run(tiny_town, BreakfastPlanner(tiny_town.sim.seed))

    [commitment] = result.ledger.all()
    assert commitment.status == CommitmentStatus.FULFILLED
    assert (commitment.location, commitment.day, commitment.tick) == ("Diner", 2, 8)

    created = result.event_log.of_kind(EventKind.COMMITMENT_CREATED)
    fulfilled = result.event_log.of_kind(EventKind.COMMITMENT_FULFILLED)
    assert [e.payload["id"] for e in created] == [commitment.id]
    assert [e.payload["id"] for e in fulfilled] == [commitment.id]
    assert 7 <= fulfilled[0].tick <= 9
    for name in ("Ann", "Bo"):
        contents = [e.content for e in result.memories[name].entries]
        assert any(c.startswith("Met ") and "at Diner" in c for c in contents)


def test_commitment_counts_add_up(reference_scenario):
    scenario = _with(reference_scenario, days=2)
    result = run(scenario, _oracle(scenario))
    log = result.event_log
    statuses = defaultdict(int)
    for commitment in result.ledger.all():
        statuses[commitment.status] += 1
    assert len(log.of_kind(EventKind.COMMITMENT_CREATED)) == len(result.ledger.all())
    assert len(log.of_kind(EventKind.COMMITMENT_FULFILLED)) == statuses[CommitmentStatus.FULFILLED]
    assert len(log.of_kind(EventKind.COMMITMENT_BROKEN)) == statuses[CommitmentStatus.BROKEN]


@pytest.mark.parametrize("mode", [RunMode.DETERMINISTIC, RunMode.PARALLEL])
def test_guard_discipline_holds(tiny_town, mode):
    result = Simulator(tiny_town, _oracle(tiny_town), mode=mode, audit=True).run()
    assert result.completed


def test_parallel_run_matches_deterministic_aggregates(reference_scenario):
    scenario = _with(reference_scenario, days=2)
    serial = run(scenario, _oracle(scenario), mode=RunMode.DETERMINISTIC)
    parallel = run(scenario, _oracle(scenario), mode=RunMode.PARALLEL, audit=True)

    assert parallel.final_states() == serial.final_states()

    def purchases(result):
        frame = purchases_frame(result.event_log).drop(columns=["seq"])
        return sorted(frame.itertuples(index=False, name=None))

    assert purchases(parallel) == purchases(serial)
    assert len(parallel.event_log) == len(serial.event_log)


def test_unavailable_backend_aborts_with_partial_result(tiny_town, broken_backend):
    simulator = Simulator(tiny_town, broken_backend)
    with pytest.raises(BackendUnavailableException) as e:
        simulator.run()
    partial = e.value.partial_result
    assert partial is not None
    assert not partial.completed
    assert broken_backend.calls == tiny_town.sim.remote.unavailable_after
    assert partial.positions == {"Ann": "Home", "Bo": "Home"}


@pytest.mark.slow
def test_reference_week_is_reproducible(reference_scenario):
    first = run(reference_scenario, _oracle(reference_scenario))
    second = run(reference_scenario, _oracle(reference_scenario))
    assert first.event_log.to_lines() == second.event_log.to_lines()
    expected = _money_ledger(first, reference_scenario)
    assert {n: a.needs.money for n, a in first.agents.items()} == expected


def test_clock_wraps_at_midnight():
    clock = SimClock(day=1, tick=22, ticks_per_day=24)
    assert (clock.advance().day, clock.tick) == (1, 23)
    assert (clock.advance().day, clock.tick) == (2, 0)
    assert clock.absolute == 24
    with pytest.raises(ValueError):
        SimClock(day=1, tick=24)


def test_positions_can_be_recomputed_from_the_log(reference_scenario):
    scenario = _with(reference_scenario, days=2)
    result = run(scenario, _oracle(scenario), mode=RunMode.PARALLEL)
    positions = {p.name: p.residence for p in scenario.personas}
    for event in result.event_log:
        if event.kind in (EventKind.TRAVEL.value, EventKind.COLLAPSE_TELEPORT.value):
            positions[event.agent] = event.payload["to"]
        elif event.kind == EventKind.SLEEP.value:
            positions[event.agent] = event.payload["location"]
    assert positions == result.positions


@pytest.mark.slow
def test_reference_week_accounts_for_every_meal(reference_scenario):
    result = run(reference_scenario, _oracle(reference_scenario))
    meals = defaultdict(set)
    for event in result.event_log:
        if event.kind in (EventKind.MEAL.value, EventKind.MEAL_SKIPPED.value):
            if event.payload.get("meal") is not None:
                meals[(event.agent, event.day)].add(event.payload["meal"])
    for persona in reference_scenario.personas:
        for day in range(1, reference_scenario.sim.days + 1):
            assert meals[(persona.name, day)] == {"breakfast", "lunch", "dinner"}


def test_travel_costs_energy_per_grid_unit(reference_scenario):
    simulator = Simulator(reference_scenario, _oracle(reference_scenario), audit=True)
    alice = simulator.agents["Alice Chen"]
    with simulator.guards.hold(alice.guard):
        assert simulator.execute_travel(alice, "Local Café", 1, 8)
        assert simulator.execute_travel(alice, "Local Diner", 1, 8)
        assert simulator.execute_travel(alice, "Local Diner", 1, 8)
    assert alice.needs.energy == 100 - 3 - 6
    travels = simulator.event_log.of_kind(EventKind.TRAVEL)
    assert [(e.payload["to"], e.payload["distance"]) for e in travels] == [
        ("Coffee Shop", 3),
        ("Local Diner", 6),
    ]
    assert simulator.tracker.co_present("Local Diner") == frozenset({"Alice Chen"})
    assert simulator.tracker.co_present("Central Park") == frozenset()


def test_collapsed_agent_cannot_travel(reference_scenario):
    simulator = Simulator(reference_scenario, _oracle(reference_scenario))
    ben = simulator.agents["Ben Okafor"]
    with simulator.guards.hold(ben.guard):
        ben.update(collapsed=True)
        assert not simulator.execute_travel(ben, "Town Office", 1, 8)
    assert simulator.tracker.position("Ben Okafor") == "Oak View Condos"


def test_nightly_reset_restores_energy_and_sends_everyone_home(reference_scenario):
    simulator = Simulator(reference_scenario, _oracle(reference_scenario))
    ben = simulator.agents["Ben Okafor"]
    with simulator.guards.hold(ben.guard):
        simulator.execute_travel(ben, "Town Office", 1, 9)
        ben.update(needs=ben.needs.with_energy(0), collapsed=True)
    simulator.nightly_reset(1)
    assert ben.needs.energy == 100
    assert not ben.collapsed
    assert simulator.tracker.position("Ben Okafor") == "Oak View Condos"
    sleeps = simulator.event_log.of_kind(EventKind.SLEEP)
    assert len(sleeps) == len(reference_scenario.personas)


_HARSH_RUNS = {}


def _harsh_run(scenario, seed):
    """
    Three days of the reference town with fast energy decay, little money and empty
    pantries, so that agents run into emergencies and collapse.
    """
    if seed not in _HARSH_RUNS:
        economy = scenario.sim.economy.model_copy(update={"base_decay": 7, "work_decay": 6})
        harsh = scenario._replace(
            personas=tuple(
                p.model_copy(update={"starting_money": 1500, "starting_grocery": 0})
                for p in scenario.personas
            ),
            sim=scenario.sim.model_copy(update={"seed": seed, "days": 3, "economy": economy}),
        )
        _HARSH_RUNS[seed] = (harsh, run(harsh, _oracle(harsh), audit=True))
    return _HARSH_RUNS[seed]


def _agent_events(result, name):
    return [e for e in result.event_log if e.agent == name]


def test_harsh_town_reaches_the_emergency_ladder(reference_scenario):
    emergencies = collapses = 0
    for seed in range(5):
        _, result = _harsh_run(reference_scenario, seed)
        emergencies += len(result.event_log.of_kind(EventKind.EMERGENCY_REPLAN))
        collapses += len(result.event_log.of_kind(EventKind.COLLAPSE_TELEPORT))
    assert emergencies > 0
    assert collapses > 0


@pytest.mark.parametrize(
    "seed", [s if s < 5 else pytest.param(s, marks=pytest.mark.slow) for s in range(100)]
)
def test_energy_ladder(reference_scenario, seed):
    scenario, result = _harsh_run(reference_scenario, seed)
    threshold = scenario.sim.economy.emergency_threshold

    for event in result.event_log:
        for key in ("energy", "energy_before", "energy_after"):
            if key in event.payload:
                assert 0 <= event.payload[key] <= 100, event

    for name in result.agents:
        events = _agent_events(result, name)
        for i, event in enumerate(events):
            if event.kind == EventKind.DECISION.value:
                energy = event.payload["energy"]
                assert energy > 0, event
                if energy <= threshold:
                    assert event.payload["emergency"], event
                    assert event.payload["prompt_kind"] == PromptKind.DINING.value, event

            elif event.kind == EventKind.EMERGENCY_REPLAN.value:
                following = [
                    e for e in events[i + 1 :]
                    if e.kind in (EventKind.DECISION.value, EventKind.SLEEP.value)
                ]
                if following and following[0].kind == EventKind.DECISION.value:
                    assert following[0].payload["prompt_kind"] == PromptKind.DINING.value

            elif event.kind == EventKind.COLLAPSE_TELEPORT.value:
                persona = next(p for p in scenario.personas if p.name == name)
                assert event.payload["energy"] == 0
                assert event.payload["to"] == persona.residence
                # nothing but the night's sleep until the agent wakes
                after = events[i + 1 :]
                assert after[0].kind == EventKind.SLEEP.value, after[0]
                assert after[0].day == event.day
                assert after[0].payload["location"] == persona.residence
                assert after[0].payload["energy_after"] == 100
                morning = [e for e in after if e.kind == EventKind.DECISION.value]
                if morning:
                    assert morning[0].day == event.day + 1
                    assert morning[0].payload["energy"] == 100


@pytest.mark.parametrize("seed", range(5))
def test_shop_owners_are_paid_every_receipt(reference_scenario, seed):
    scenario, result = _harsh_run(reference_scenario, seed)
    owners = {s.location_name: s.owner for s in scenario.town_map.shops.values() if s.owner}
    paid = defaultdict(int)
    for event in result.event_log.of_kind(EventKind.INCOME):
        if event.payload["source"] == "receipts":
            paid[(event.agent, event.day)] += parse_cents(event.payload["amount"])
    earned = defaultdict(int)
    for row in purchases_frame(result.event_log).itertuples(index=False):
        if row.shop in owners:
            earned[(owners[row.shop], row.day)] += row.final_price
    assert paid == {key: value for key, value in earned.items() if value}


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(50))
def test_parallel_week_matches_deterministic_week(reference_scenario, seed):
    scenario = _with(reference_scenario, seed=seed)
    serial = run(scenario, _oracle(scenario), mode=RunMode.DETERMINISTIC)
    parallel = run(scenario, _oracle(scenario), mode=RunMode.PARALLEL, audit=True)
    assert parallel.completed

    def totals(result):
        purchases = purchases_frame(result.event_log)
        sales = [(s.day, s.revenue, s.transactions) for s in daily_sales(result.event_log, None)]
        return len(purchases), int(purchases["final_price"].sum()), sales

    assert totals(parallel) == totals(serial)
