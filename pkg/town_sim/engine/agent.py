from __future__ import annotations

from typing import Any, Dict, Optional, Set

from town_sim.economy.needs import NeedsState
from town_sim.economy.pricing import format_cents
from town_sim.engine.guards import GuardRegistry
from town_sim.memory.stream import MemoryStream
from town_sim.world.scenario import Persona

_FLAGS = (
    "collapsed",
    "emergency",
    "must_eat_out_or_shop",
    "shopping_needed",
    "last_action",
)


class AgentState:
    """
    Mutable state of one agent during a run.

    All changes go through `update`, which requires the agent's guard to be held by
    the calling thread when the guard registry audits.

    Parameters
    ----------
    persona : Persona
        The agent's persona.
    index : int
        Position of the agent in the sorted agent list.
    memory : MemoryStream
        The agent's memory stream.
    guards : GuardRegistry
        Guards of the run.
    grocery_threshold : int
        Grocery stock below which shopping is needed.
    """

    def __init__(
        self,
        persona: Persona,
        index: int,
        memory: MemoryStream,
        guards: GuardRegistry,
        grocery_threshold: int,
    ):
        self.persona = persona
        self.index = index
        self.memory = memory
        self.guard = guards.agent(persona.name)
        self._guards = guards
        self._needs = NeedsState(
            energy=persona.starting_energy,
            grocery=persona.starting_grocery,
            money=persona.starting_money,
        )
        self.collapsed = False
        self.emergency = False
        self.must_eat_out_or_shop = False
        self.shopping_needed = persona.starting_grocery < grocery_threshold
        self.meals_done: Set[str] = set()
        self.last_action: Optional[str] = None

    @property
    def name(self) -> str:
        return self.persona.name

    @property
    def needs(self) -> NeedsState:
        return self._needs

    def update(self, needs: Optional[NeedsState] = None, **flags: Any):
        """
        Change the agent's needs and flags. Unknown flags are a programming error.
        """
        self._guards.assert_held(self.guard)
        if needs is not None:
            self._needs = needs
        for key, value in flags.items():
            if key not in _FLAGS:
                raise AttributeError(f"AgentState has no flag {key}")
            setattr(self, key, value)

    def finish_meal(self, meal: Optional[str]):
        self._guards.assert_held(self.guard)
        if meal is not None:
            self.meals_done.add(meal)

    def start_day(self):
        self._guards.assert_held(self.guard)
        self.meals_done = set()

    def to_record(self, position: str) -> Dict[str, Any]:
        return {
            "name": self.name,
            "position": position,
            "energy": self.needs.energy,
            "grocery": self.needs.grocery,
            "money": format_cents(self.needs.money),
            "collapsed": self.collapsed,
        }
