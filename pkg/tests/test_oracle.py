import numpy
import pytest

from town_sim.decision.oracle import (
    ACCEPT,
    DIALOGUE,
    ScriptedOracle,
    hour_text,
    oracle_converse,
    oracle_decide,
    spawn_rng,
)
from town_sim.decision.validation import ActionKind, ActionPlan, validate_plan
from town_sim.memory.commitments import Commitment
from town_sim.memory.stream import MemoryKind, MemoryStream

SEED = 42


def _diner_regular(scenario, agent, visits=4):
    persona = next(p for p in scenario.personas if p.name == agent)
    memory = MemoryStream(
        owner=agent,
        relationships=persona.relationships,
        config=scenario.sim.memory,
        ticks_per_day=scenario.sim.ticks_per_day,
    )
    for n in range(visits):
        day, tick = 1 + n // 2, 12 if n % 2 == 0 else 18
        memory.record(
            day,
            tick,
            MemoryKind.PURCHASE,
            "daily special at Local Diner",
            payload={"shop": "Local Diner", "item": "daily special"},
        )
    return memory


def test_ten_dollars_buys_the_discounted_meal(reference_scenario, context_factory):
    context = context_factory(
        reference_scenario, "Ben Okafor", position="Town Office", day=3, tick=12, money=1000
    )
    plan = oracle_decide(context, SEED)
    assert plan.action == ActionKind.EAT
    assert plan.target == "Fried Chicken"
    assert plan.item == "fried chicken meal"


def test_diner_wins_without_promotion(reference_scenario, context_factory):
    context = context_factory(reference_scenario, "Alice Chen", position="Town Office", day=2, tick=12)
    plan = oracle_decide(context, SEED)
    assert (plan.target, plan.item) == ("Local Diner", "daily special")


def test_deal_prone_agent_switches(reference_scenario, context_factory):
    memory = _diner_regular(reference_scenario, "Alice Chen")
    context = context_factory(
        reference_scenario, "Alice Chen", position="Town Office", day=3, tick=12, memory=memory
    )
    assert context.recent_visits["Local Diner"] == 4
    assert oracle_decide(context, SEED).target == "Fried Chicken"


def test_deal_averse_regular_stays(reference_scenario, context_factory):
    memory = _diner_regular(reference_scenario, "Ben Okafor")
    context = context_factory(
        reference_scenario, "Ben Okafor", position="Town Office", day=3, tick=12, memory=memory
    )
    assert oracle_decide(context, SEED).target == "Local Diner"


def test_breakfast_at_home(reference_scenario, context_factory):
    context = context_factory(reference_scenario, "Alice Chen", tick=7)
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target) == (ActionKind.EAT, "Oak View Condos")


def test_work_during_working_hours(reference_scenario, context_factory):
    context = context_factory(reference_scenario, "Alice Chen", day=1, tick=10)
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target) == (ActionKind.WORK, "Town Office")


def test_emergency_without_means_skips(reference_scenario, context_factory):
    context = context_factory(
        reference_scenario,
        "Ben Okafor",
        position="Town Office",
        tick=15,
        energy=10,
        grocery=0,
        money=0,
        emergency=True,
    )
    plan = oracle_decide(context, SEED)
    assert plan.action == ActionKind.SKIP


def test_emergency_eats_a_snack_if_that_is_all_there_is(reference_scenario, context_factory):
    context = context_factory(
        reference_scenario,
        "Ben Okafor",
        position="Town Office",
        tick=15,
        energy=10,
        grocery=0,
        money=300,
        emergency=True,
    )
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target, plan.item) == (ActionKind.EAT, "Local Diner", "drip coffee")


def test_weekend_afternoon_in_the_park(reference_scenario, context_factory):
    context = context_factory(reference_scenario, "Alice Chen", day=6, tick=14)
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target) == (ActionKind.TRAVEL, "Central Park")


def test_shopping_when_groceries_run_low(reference_scenario, context_factory):
    context = context_factory(
        reference_scenario, "Ben Okafor", day=6, tick=10, shopping_needed=True
    )
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target, plan.item) == (
        ActionKind.SHOP_GROCERIES,
        "Grocery Mart",
        "grocery bundle",
    )


def test_rest_at_home_in_the_evening(reference_scenario, context_factory):
    context = context_factory(reference_scenario, "Alice Chen", day=1, tick=20)
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target) == (ActionKind.REST, "Oak View Condos")


def _breakfast_date(day=2, tick=9, location="Coffee Shop"):
    return Commitment(
        id="1.20.0.Alice Chen>Ben Okafor",
        parties=frozenset({"Alice Chen", "Ben Okafor"}),
        action="breakfast",
        location=location,
        day=day,
        tick=tick,
        created_day=1,
        created_tick=20,
    )


def test_due_commitment_is_honored(reference_scenario, context_factory):
    context = context_factory(
        reference_scenario, "Ben Okafor", day=2, tick=8, commitments=[_breakfast_date()]
    )
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target, plan.item) == (
        ActionKind.EAT,
        "Coffee Shop",
        "breakfast sandwich",
    )


def test_waits_for_a_later_meal_date(reference_scenario, context_factory):
    lunch_date = _breakfast_date(day=1, tick=13, location="Local Diner")
    context = context_factory(
        reference_scenario, "Ben Okafor", position="Town Office", day=1, tick=11, commitments=[lunch_date]
    )
    plan = oracle_decide(context, SEED)
    assert (plan.action, plan.target) == (ActionKind.REST, "Town Office")


@pytest.mark.parametrize("seed", range(8))
def test_oracle_plans_always_validate(reference_scenario, context_factory, seed):
    rng = numpy.random.default_rng(seed)
    names = [p.name for p in reference_scenario.personas]
    locations = sorted(reference_scenario.town_map.locations)
    for _ in range(40):
        energy = int(rng.integers(1, 101))
        context = context_factory(
            reference_scenario,
            str(rng.choice(names)),
            position=str(rng.choice(locations)),
            day=int(rng.integers(1, 8)),
            tick=int(rng.integers(7, 22)),
            energy=energy,
            grocery=int(rng.integers(0, 101)),
            money=int(rng.integers(0, 3000)),
            emergency=energy <= 20,
            shopping_needed=bool(rng.random() < 0.3),
        )
        plan = oracle_decide(context, seed)
        assert isinstance(validate_plan(plan.to_response(), context), ActionPlan)


def test_oracle_is_pure(reference_scenario, context_factory):
    context = context_factory(reference_scenario, "Carla Mendes", position="Town Office", day=3, tick=12)
    oracle = ScriptedOracle(SEED)
    assert oracle.decide(context) == oracle.decide(context)


def test_spawned_streams_are_keyed():
    a = spawn_rng(SEED, 3, 2, 12, DIALOGUE).random(4)
    b = spawn_rng(SEED, 3, 2, 12, DIALOGUE).random(4)
    c = spawn_rng(SEED, 3, 2, 12, ACCEPT).random(4)
    assert list(a) == list(b)
    assert list(a) != list(c)


@pytest.mark.parametrize(
    "tick, text", [(0, "12 AM"), (9, "9 AM"), (12, "12 PM"), (13, "1 PM"), (20, "8 PM")]
)
def test_hour_text(tick, text):
    assert hour_text(tick) == text


def test_close_friends_plan_breakfast(reference_scenario, conversation_factory):
    response = oracle_converse(conversation_factory(reference_scenario, 0.8, 1.0), SEED)
    [intent] = response["intents"]
    assert intent["parties"] == ["Alice Chen", "Ben Okafor"]
    assert intent["location"] == "Coffee Shop"
    assert intent["time"] == 9
    assert intent["day_offset"] == 1
    assert intent["accepted_by"] == ["Ben Okafor"]


def test_invitation_can_be_declined(reference_scenario, conversation_factory):
    response = oracle_converse(conversation_factory(reference_scenario, 0.8, 0.0), SEED)
    [intent] = response["intents"]
    assert intent["accepted_by"] == []


def test_acquaintances_only_chat(reference_scenario, conversation_factory):
    response = oracle_converse(conversation_factory(reference_scenario, 0.5, 0.5), SEED)
    assert response["intents"] == []
    assert 3 <= len(response["dialogue"]) <= 4


def test_no_invitations_before_the_evening(reference_scenario, conversation_factory):
    response = oracle_converse(conversation_factory(reference_scenario, 0.8, 1.0, tick=15), SEED)
    assert response["intents"] == []
