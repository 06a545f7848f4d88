import copy
from pathlib import Path

import pytest

from town_sim.decision.context import (
    ConversationContext,
    build_context,
    location_options,
)
from town_sim.economy.needs import NeedsState
from town_sim.exception import BackendRequestException
from town_sim.memory.stream import MemoryStream
from town_sim.world.loader import load_scenario, scenario_from_dict

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
REFERENCE = SCENARIO_DIR / "reference.yaml"
REFERENCE_BASELINE = SCENARIO_DIR / "reference_baseline.yaml"

TINY_TOWN = {
    "name": "tiny-town",
    "map": {
        "locations": {
            "Home": [0, 2],
            "Office": [4, 0],
            "Diner": [2, 0],
            "Market": [6, 0],
        },
        "travel_paths": [[0, 0], [2, 0], [4, 0], [6, 0]],
    },
    "shops": {
        "Diner": {
            "kind": "dining",
            "opening_hours": [7, 22],
            "menu": [
                {"item_name": "plate", "base_price": "10.00", "energy_restore": 40},
                {"item_name": "tea", "base_price": "2.00", "energy_restore": 5},
            ],
            "discount_schedule": [{"start_day": 2, "end_day": 2, "rate": 0.5}],
        },
        "Market": {
            "kind": "grocery",
            "opening_hours": [8, 21],
            "menu": [
                {"item_name": "bundle", "base_price": "20.00", "grocery_restore": 50}
            ],
        },
    },
    "agents": [
        {
            "name": "Ann",
            "income_kind": "hourly",
            "income_amount": "15.00",
            "residence": "Home",
            "workplace": "Office",
            "deal_proneness": 0.9,
            "relationships": {"Bo": 0.8},
        },
        {
            "name": "Bo",
            "income_kind": "hourly",
            "income_amount": "15.00",
            "residence": "Home",
            "workplace": "Office",
            "deal_proneness": 0.2,
            "relationships": {"Ann": 0.8},
        },
    ],
    "sim": {"days": 2, "seed": 7},
}


@pytest.fixture
def tiny_town_dict():
    return copy.deepcopy(TINY_TOWN)


@pytest.fixture
def tiny_town(tiny_town_dict):
    return scenario_from_dict(tiny_town_dict)


@pytest.fixture(scope="session")
def reference_scenario():
    return load_scenario(REFERENCE)


@pytest.fixture(scope="session")
def baseline_scenario():
    return load_scenario(REFERENCE_BASELINE)


class ScriptedBackend:
    """
    Backend answering from a fixed list of raw responses, then repeating the last.
    """

    name = "scripted"

    def __init__(self, responses, conversations=None):
        self.responses = list(responses)
        self.conversations = list(conversations or [])
        self.prompts = []

    def decide(self, context, prompt):
        self.prompts.append(prompt)
        if len(self.responses) > 1:
            return self.responses.pop(0)
        return self.responses[0]

    def converse(self, context, prompt):
        self.prompts.append(prompt)
        if not self.conversations:
            return None
        return self.conversations.pop(0)


class BrokenBackend:
    """
    Backend whose transport always fails.
    """

    name = "broken"

    def __init__(self):
        self.calls = 0

    def decide(self, context, prompt):
        self.calls += 1
        raise BackendRequestException("connection refused")

    def converse(self, context, prompt):
        self.calls += 1
        raise BackendRequestException("connection refused")


@pytest.fixture
def broken_backend():
    return BrokenBackend()


def make_context(
    scenario,
    agent,
    position=None,
    day=1,
    tick=12,
    energy=None,
    grocery=None,
    money=None,
    emergency=False,
    meals_done=(),
    shopping_needed=False,
    must_eat_out_or_shop=False,
    commitments=(),
    memory=None,
):
    """
    Decision context of one agent of a scenario, with needs overridable.
    """
    personas = {p.name: p for p in scenario.personas}
    persona = personas[agent]
    needs = NeedsState(
        energy=persona.starting_energy if energy is None else energy,
        grocery=persona.starting_grocery if grocery is None else grocery,
        money=persona.starting_money if money is None else money,
    )
    if memory is None:
        memory = MemoryStream(
            owner=agent,
            relationships=persona.relationships,
            config=scenario.sim.memory,
            ticks_per_day=scenario.sim.ticks_per_day,
        )
    return build_context(
        town_map=scenario.town_map,
        sim=scenario.sim,
        persona=persona,
        agent_index=sorted(personas).index(agent),
        needs=needs,
        position=position or persona.residence,
        day=day,
        tick=tick,
        memory=memory,
        commitments=commitments,
        known_agents=sorted(personas),
        emergency=emergency,
        meals_done=meals_done,
        shopping_needed=shopping_needed,
        must_eat_out_or_shop=must_eat_out_or_shop,
    )


@pytest.fixture
def context_factory():
    return make_context


def make_conversation_context(scenario, proximity, partner_proximity, tick=20):
    """
    Alice Chen meeting Ben Okafor at her home on day 1.
    """
    personas = {p.name: p for p in scenario.personas}
    names = sorted(personas)
    alice, ben = personas["Alice Chen"], personas["Ben Okafor"]
    return ConversationContext(
        initiator=alice.name,
        initiator_index=names.index(alice.name),
        partner=ben.name,
        partner_index=names.index(ben.name),
        initiator_persona=alice,
        partner_persona=ben,
        location=alice.residence,
        day=1,
        tick=tick,
        ticks_per_day=scenario.sim.ticks_per_day,
        proximity=proximity,
        partner_proximity=partner_proximity,
        locations=location_options(
            scenario.town_map, alice.residence, 1, tick, scenario.sim.economy
        ),
        known_agents=tuple(names),
    )


@pytest.fixture
def conversation_factory():
    return make_conversation_context


@pytest.fixture
def scripted_backend():
    return ScriptedBackend
