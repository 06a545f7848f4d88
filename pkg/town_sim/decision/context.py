from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, Optional, Tuple

from town_sim.economy.needs import NeedsState
from town_sim.memory.commitments import Commitment
from town_sim.memory.stream import MemoryEntry, MemoryStream, RetrievalQuery
from town_sim.world.scenario import (
    EconomyConfig,
    GridCoord,
    LocationKind,
    Persona,
    SimConfig,
)
from town_sim.world.town_map import TownMap


class PromptKind(str, Enum):
    DAILY_PLAN = "daily_plan"
    DINING = "dining"
    CONVERSATION = "conversation"
    WORK = "work"


@dataclass(frozen=True)
class MenuOption:
    """
    A menu item as seen by the agent on the current day.
    """

    item_name: str
    base_price: int
    discount_rate: float
    price: int
    energy_restore: int
    grocery_restore: int
    is_meal: bool


@dataclass(frozen=True)
class LocationOption:
    """
    A known location as seen from the agent's position. Shops carry their opening
    hours and the menu with effective prices of the day.
    """

    name: str
    kind: LocationKind
    coord: GridCoord
    distance: int
    aliases: Tuple[str, ...] = ()
    opening_hours: Optional[Tuple[int, int]] = None
    is_open: bool = True
    menu: Tuple[MenuOption, ...] = ()

    def menu_option(self, item_name: str) -> Optional[MenuOption]:
        return next((m for m in self.menu if m.item_name == item_name), None)


@dataclass(frozen=True)
class CommitmentView:
    """
    Read-only copy of a pending commitment.
    """

    id: str
    parties: Tuple[str, ...]
    action: str
    location: str
    day: int
    tick: int

    @classmethod
    def of(cls, commitment: Commitment) -> CommitmentView:
        return cls(
            id=commitment.id,
            parties=tuple(sorted(commitment.parties)),
            action=commitment.action,
            location=commitment.location,
            day=commitment.day,
            tick=commitment.tick,
        )


@dataclass(frozen=True)
class DecisionContext:
    """
    Everything an agent knows when deciding what to do this tick. The locations
    listed here are the grounding whitelist: a plan may only target them.

    Attributes
    ----------
    agent : str
        Name of the deciding agent.
    agent_index : int
        Position of the agent in the sorted agent list; keys its random streams.
    persona : Persona
        The agent's persona.
    needs : NeedsState
        Energy, grocery and money.
    position : str
        Current location.
    day, tick, ticks_per_day : int
        The clock.
    prompt_kind : PromptKind
        Which prompt applies.
    emergency : bool
        Energy is at or below the emergency threshold; only food actions are valid.
    meal_due : str, optional
        The meal window currently open and not yet eaten.
    meal_window_end : int, optional
        End tick (exclusive) of that window.
    is_work_tick : bool
        The persona is scheduled to work now.
    day_off : bool
        Weekend day.
    afternoon : bool
        Tick lies in the afternoon.
    shopping_needed : bool
        Grocery stock fell below the shopping threshold.
    must_eat_out_or_shop : bool
        A home meal was refused for lack of groceries.
    locations : Tuple[LocationOption, ...]
        Known locations, sorted by name.
    known_agents : Tuple[str, ...]
        Other agents of the town.
    memories : Tuple[MemoryEntry, ...]
        Top retrieved memories.
    commitments : Tuple[CommitmentView, ...]
        Pending commitments of the agent.
    recent_visits : Dict[str, int]
        Purchases per location inside the habit window.
    economy : EconomyConfig
        World constants, e.g. grocery used by a home meal.
    feedback : Tuple[str, ...]
        Reasons earlier attempts of this decision were rejected.
    """

    agent: str
    agent_index: int
    persona: Persona
    needs: NeedsState
    position: str
    day: int
    tick: int
    ticks_per_day: int
    prompt_kind: PromptKind
    emergency: bool
    meal_due: Optional[str]
    meal_window_end: Optional[int]
    is_work_tick: bool
    day_off: bool
    afternoon: bool
    shopping_needed: bool
    must_eat_out_or_shop: bool
    locations: Tuple[LocationOption, ...]
    known_agents: Tuple[str, ...]
    memories: Tuple[MemoryEntry, ...] = ()
    commitments: Tuple[CommitmentView, ...] = ()
    recent_visits: Dict[str, int] = field(default_factory=dict)
    economy: EconomyConfig = field(default_factory=EconomyConfig)
    feedback: Tuple[str, ...] = ()

    def location_option(self, name: str) -> Optional[LocationOption]:
        return next((o for o in self.locations if o.name == name), None)

    def resolve_location(self, name: Optional[str]) -> Optional[str]:
        """
        Canonical whitelist name for a name or alias, or None if unknown.
        """
        if name is None:
            return None
        name = name.strip()
        for option in self.locations:
            if name == option.name or name in option.aliases:
                return option.name
        return None

    def with_feedback(self, reason: str) -> DecisionContext:
        return replace(self, feedback=self.feedback + (reason,))


@dataclass(frozen=True)
class ConversationContext:
    """
    What the initiator of a conversation knows about the encounter. Location
    distances are measured from the initiator's residence.
    """

    initiator: str
    initiator_index: int
    partner: str
    partner_index: int
    initiator_persona: Persona
    partner_persona: Persona
    location: str
    day: int
    tick: int
    ticks_per_day: int
    proximity: float
    partner_proximity: float
    locations: Tuple[LocationOption, ...]
    known_agents: Tuple[str, ...]
    memories: Tuple[MemoryEntry, ...] = ()
    pending_between: Tuple[CommitmentView, ...] = ()
    prompt_kind: PromptKind = PromptKind.CONVERSATION


def location_options(
    town_map: TownMap,
    origin: str,
    day: int,
    tick: int,
    economy: EconomyConfig,
) -> Tuple[LocationOption, ...]:
    """
    The grounding whitelist: every location of the town with distances from
    `origin` and, for shops, the menu priced for the day.
    """
    options = []
    for name in sorted(town_map.locations):
        location = town_map.locations[name]
        shop = town_map.shops.get(name)
        menu: Tuple[MenuOption, ...] = ()
        opening_hours = None
        is_open = True
        if shop is not None:
            opening_hours = tuple(shop.opening_hours)
            is_open = shop.is_open(tick)
            menu = tuple(
                MenuOption(
                    item_name=item.item_name,
                    base_price=item.base_price,
                    discount_rate=shop.discount_rate(item.item_name, day),
                    price=shop.effective_price(item.item_name, day),
                    energy_restore=item.energy_restore,
                    grocery_restore=item.grocery_restore,
                    is_meal=item.energy_restore >= economy.meal_min_energy,
                )
                for item in shop.menu
            )
        options.append(
            LocationOption(
                name=name,
                kind=location.kind,
                coord=location.coord,
                distance=town_map.distance(origin, name),
                aliases=location.aliases,
                opening_hours=opening_hours,
                is_open=is_open,
                menu=menu,
            )
        )
    return tuple(options)


def build_context(
    *,
    town_map: TownMap,
    sim: SimConfig,
    persona: Persona,
    agent_index: int,
    needs: NeedsState,
    position: str,
    day: int,
    tick: int,
    memory: MemoryStream,
    commitments: Iterable[Commitment],
    known_agents: Iterable[str],
    emergency: bool,
    meals_done: Iterable[str],
    shopping_needed: bool,
    must_eat_out_or_shop: bool,
) -> DecisionContext:
    """
    Assemble the decision context of an agent for the current tick.

    The prompt kind is dining when the agent is in an emergency or a meal is due,
    work during working hours, and the daily plan otherwise.
    """
    schedule = sim.schedule
    meal = schedule.meal_window_at(tick)
    meal_due = meal if meal is not None and meal not in set(meals_done) else None
    meal_window_end = schedule.meal_windows[meal_due][1] if meal_due else None
    is_work_tick = persona.is_work_tick(day, tick)

    if emergency or meal_due is not None:
        prompt_kind = PromptKind.DINING
    elif is_work_tick:
        prompt_kind = PromptKind.WORK
    else:
        prompt_kind = PromptKind.DAILY_PLAN

    options = location_options(town_map, position, day, tick, sim.economy)
    memories = memory.retrieve(
        RetrievalQuery(day=day, tick=tick, max_n=sim.memory.max_memories)
    )
    recent_visits = {
        o.name: memory.recent_visit_count(o.name, day, tick)
        for o in options
        if o.menu
    }
    start, end = schedule.afternoon

    return DecisionContext(
        agent=persona.name,
        agent_index=agent_index,
        persona=persona,
        needs=needs,
        position=position,
        day=day,
        tick=tick,
        ticks_per_day=sim.ticks_per_day,
        prompt_kind=prompt_kind,
        emergency=emergency,
        meal_due=meal_due,
        meal_window_end=meal_window_end,
        is_work_tick=is_work_tick,
        day_off=schedule.is_weekend(day),
        afternoon=start <= tick < end,
        shopping_needed=shopping_needed,
        must_eat_out_or_shop=must_eat_out_or_shop,
        locations=options,
        known_agents=tuple(sorted(a for a in known_agents if a != persona.name)),
        memories=tuple(memories),
        commitments=tuple(CommitmentView.of(c) for c in commitments),
        recent_visits=recent_visits,
        economy=sim.economy,
    )
