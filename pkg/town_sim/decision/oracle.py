from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy

from town_sim.decision.context import (
    CommitmentView,
    ConversationContext,
    DecisionContext,
    LocationOption,
    MenuOption,
)
from town_sim.decision.validation import ActionKind, ActionPlan
from town_sim.world.scenario import LocationKind, OracleConfig

logger = logging.getLogger(__name__)

# Purposes of the per-decision random streams
SHUFFLE = 0
DIALOGUE = 1
ACCEPT = 2

_GREETINGS = (
    "Hi {partner}, good to see you!",
    "Hey {partner}, how is your day going?",
    "Oh, {partner}! Fancy meeting you here.",
    "Hello {partner}, busy day?",
)
_REPLIES = (
    "Not bad at all, thanks for asking.",
    "Pretty good, just taking it easy.",
    "Busy as usual, but fine.",
    "Great, the weather is lovely today.",
)
_SMALL_TALK = (
    "Have you tried anything new around town lately?",
    "I heard the shops are busy this week.",
    "I should really get some groceries soon.",
    "Work has been a lot this week.",
)
_CLOSINGS = (
    "Anyway, see you later!",
    "Take care!",
    "Talk soon!",
    "Enjoy the rest of your day!",
)


def spawn_rng(
    seed: int, agent_index: int, day: int, tick: int, purpose: int
) -> numpy.random.Generator:
    """
    A random stream keyed by who draws, when and for what. Draws never depend on
    the order in which agents are served or on the thread serving them.
    """
    return numpy.random.default_rng(
        [seed & 0xFFFFFFFFFFFFFFFF, agent_index, day, tick, purpose]
    )


def hour_text(tick: int) -> str:
    """
    Clock text of a tick, e.g. 9 -> "9 AM", 13 -> "1 PM".
    """
    hour = tick % 24
    suffix = "AM" if hour < 12 else "PM"
    return f"{(hour % 12) or 12} {suffix}"


def meal_utility(
    option: LocationOption,
    item: MenuOption,
    deal_proneness: float,
    visits: int,
    config: OracleConfig,
) -> float:
    """
    U = -price + dpp * discount_bonus * [discounted] - distance_cost * distance
        + habit_bonus * visits

    Prices enter in currency units, so the constants read as currency equivalents.
    """
    discounted = 1.0 if item.discount_rate > 0 else 0.0
    return (
        -item.price / 100
        + deal_proneness * config.discount_bonus * discounted
        - config.distance_cost * option.distance
        + config.habit_bonus * visits
    )


def rank_meal_options(
    context: DecisionContext,
    config: OracleConfig,
    include_snacks: bool = False,
) -> List[Tuple[float, LocationOption, MenuOption]]:
    """
    Every open, affordable dining item ranked by utility, best first. Ties go to the
    lexicographically smaller location name, then item name.
    """
    ranked = []
    for option in context.locations:
        if option.kind != LocationKind.DINING or not option.is_open:
            continue
        for item in option.menu:
            if not (item.is_meal or include_snacks):
                continue
            if item.price > context.needs.money:
                continue
            utility = meal_utility(
                option,
                item,
                context.persona.deal_proneness,
                context.recent_visits.get(option.name, 0),
                config,
            )
            ranked.append((utility, option, item))
    ranked.sort(key=lambda row: (-row[0], row[1].name, row[2].item_name))
    return ranked


def _plan(
    context: DecisionContext,
    action: ActionKind,
    target: str,
    description: str,
    item: Optional[str] = None,
    reasoning: str = "",
) -> ActionPlan:
    return ActionPlan(
        time=context.tick,
        action=action,
        target=target,
        item=item,
        description=description,
        energy_considerations=f"Energy is {context.needs.energy}.",
        reasoning=reasoning,
    )


def _due_commitment(context: DecisionContext) -> Optional[CommitmentView]:
    due = [
        c
        for c in context.commitments
        if c.day == context.day and c.tick - 1 <= context.tick <= c.tick + 1
    ]
    return min(due, key=lambda c: (c.tick, c.id), default=None)


def _waiting_for_commitment(context: DecisionContext) -> bool:
    """
    A meal commitment later in the current meal window, at a dining location.
    """
    if context.meal_due is None or context.meal_window_end is None:
        return False
    for commitment in context.commitments:
        option = context.location_option(commitment.location)
        if (
            commitment.day == context.day
            and context.tick < commitment.tick < context.meal_window_end
            and option is not None
            and option.kind == LocationKind.DINING
        ):
            return True
    return False


def _cheapest_affordable(
    option: LocationOption, money: int, meals_only: bool
) -> Optional[MenuOption]:
    items = sorted(
        (
            m
            for m in option.menu
            if m.price <= money and (m.is_meal or not meals_only)
        ),
        key=lambda m: (m.price, m.item_name),
    )
    return items[0] if items else None


def _honor_commitment(
    context: DecisionContext, commitment: CommitmentView
) -> ActionPlan:
    option = context.location_option(commitment.location)
    reason = f"Keeping my {commitment.action} plan with {', '.join(commitment.parties)}."
    if option is not None and option.kind == LocationKind.DINING and option.is_open:
        item = _cheapest_affordable(
            option, context.needs.money, meals_only=context.meal_due is not None
        )
        if item is not None:
            return _plan(
                context,
                ActionKind.EAT,
                option.name,
                f"Have {item.item_name} at {option.name}",
                item=item.item_name,
                reasoning=reason,
            )
    if context.position == commitment.location:
        return _plan(
            context,
            ActionKind.REST,
            context.position,
            f"Wait at {commitment.location}",
            reasoning=reason,
        )
    return _plan(
        context,
        ActionKind.TRAVEL,
        commitment.location,
        f"Go to {commitment.location}",
        reasoning=reason,
    )


def _meal_plan(context: DecisionContext, config: OracleConfig) -> ActionPlan:
    persona = context.persona
    needs = context.needs
    economy = context.economy
    can_cook = needs.grocery >= economy.meal_grocery_cost
    label = context.meal_due or "food"

    if (
        context.position == persona.residence
        and can_cook
        and not context.must_eat_out_or_shop
        and (context.meal_due == "breakfast" or context.emergency)
    ):
        return _plan(
            context,
            ActionKind.EAT,
            persona.residence,
            f"Cook {label} at home",
            reasoning="There are enough groceries at home.",
        )

    ranked = rank_meal_options(context, config, include_snacks=context.emergency)
    if ranked:
        utility, option, item = ranked[0]
        return _plan(
            context,
            ActionKind.EAT,
            option.name,
            f"Have {item.item_name} at {option.name} for {label}",
            item=item.item_name,
            reasoning=f"Best option for me right now (utility {utility:.2f}).",
        )

    if can_cook:
        return _plan(
            context,
            ActionKind.EAT,
            persona.residence,
            f"Cook {label} at home",
            reasoning="Eating out is not affordable.",
        )
    return _plan(
        context,
        ActionKind.SKIP,
        context.position,
        f"Skip {label}",
        reasoning="Nothing affordable and no groceries at home.",
    )


def _free_time_plan(context: DecisionContext) -> ActionPlan:
    persona = context.persona

    if context.shopping_needed or context.must_eat_out_or_shop:
        grocers = sorted(
            (
                o
                for o in context.locations
                if o.kind == LocationKind.GROCERY and o.is_open
            ),
            key=lambda o: (o.distance, o.name),
        )
        for option in grocers:
            items = sorted(
                (
                    m
                    for m in option.menu
                    if m.grocery_restore > 0 and m.price <= context.needs.money
                ),
                key=lambda m: (m.price, m.item_name),
            )
            if items:
                return _plan(
                    context,
                    ActionKind.SHOP_GROCERIES,
                    option.name,
                    f"Buy {items[0].item_name} at {option.name}",
                    item=items[0].item_name,
                    reasoning="Groceries at home are running low.",
                )

    if context.day_off and context.afternoon:
        leisure = sorted(
            (o for o in context.locations if o.kind == LocationKind.LEISURE),
            key=lambda o: (o.distance, o.name),
        )
        if leisure:
            target = leisure[0].name
            if context.position == target:
                return _plan(context, ActionKind.REST, target, f"Relax at {target}")
            return _plan(context, ActionKind.TRAVEL, target, f"Spend the afternoon at {target}")

    return _plan(context, ActionKind.REST, persona.residence, "Rest at home")


def oracle_decide(
    context: DecisionContext, seed: int, config: OracleConfig = OracleConfig()
) -> ActionPlan:
    """
    The scripted decision rule. A pure function of its arguments, and every plan it
    returns passes validation.

    Rules, in order: eat when in an emergency, honor a commitment due now, eat when
    a meal is due, work during working hours, otherwise use free time.

    Parameters
    ----------
    context : DecisionContext
        What the agent knows.
    seed : int
        Run seed. The rule itself draws nothing; the seed is part of the signature
        so that every backend is called the same way.
    config : OracleConfig, optional
        Utility constants, by default the global defaults.

    Returns
    -------
    ActionPlan
        The plan.
    """
    if context.emergency:
        return _meal_plan(context, config)

    commitment = _due_commitment(context)
    if commitment is not None:
        return _honor_commitment(context, commitment)

    if context.meal_due is not None:
        if _waiting_for_commitment(context):
            return _plan(
                context,
                ActionKind.REST,
                context.position,
                f"Wait for my {context.meal_due} plans",
            )
        return _meal_plan(context, config)

    if context.is_work_tick and context.persona.workplace is not None:
        workplace = context.persona.workplace
        return _plan(context, ActionKind.WORK, workplace, f"Work at {workplace}")

    return _free_time_plan(context)


def _invitation_venue(context: ConversationContext, meal_tick: int) -> Optional[str]:
    venues = sorted(
        (
            o
            for o in context.locations
            if o.kind == LocationKind.DINING
            and o.opening_hours is not None
            and o.opening_hours[0] <= meal_tick < o.opening_hours[1]
        ),
        key=lambda o: (o.distance, o.name),
    )
    return venues[0].name if venues else None


def oracle_converse(
    context: ConversationContext, seed: int, config: OracleConfig = OracleConfig()
) -> Dict[str, Any]:
    """
    A template conversation between two co-present agents.

    In the evening, close friends without plans invite each other to breakfast the
    next day. The partner accepts with probability equal to their proximity to the
    initiator, drawn from the partner's own random stream.

    Returns
    -------
    Dict[str, Any]
        A conversation response with `dialogue` and `intents`.
    """
    rng = spawn_rng(seed, context.initiator_index, context.day, context.tick, DIALOGUE)
    initiator, partner = context.initiator, context.partner
    first_name = partner.split()[0]

    dialogue = [
        {
            "speaker": initiator,
            "text": _GREETINGS[rng.integers(len(_GREETINGS))].format(partner=first_name),
        },
        {"speaker": partner, "text": _REPLIES[rng.integers(len(_REPLIES))]},
    ]
    if rng.random() < 0.5:
        dialogue.append(
            {"speaker": initiator, "text": _SMALL_TALK[rng.integers(len(_SMALL_TALK))]}
        )

    intents = []
    venue = _invitation_venue(context, config.invitation_meal_tick)
    if (
        context.tick >= config.invitation_tick
        and context.proximity >= config.invitation_min_proximity
        and not context.pending_between
        and venue is not None
    ):
        accept_rng = spawn_rng(
            seed, context.partner_index, context.day, context.tick, ACCEPT
        )
        accepted = bool(accept_rng.random() < context.partner_proximity)
        dialogue.append(
            {
                "speaker": initiator,
                "text": (
                    f"Want to have breakfast at {venue} tomorrow at "
                    f"{hour_text(config.invitation_meal_tick)}?"
                ),
            }
        )
        dialogue.append(
            {
                "speaker": partner,
                "text": "Sure! See you there." if accepted else "Maybe another time.",
            }
        )
        intents.append(
            {
                "kind": "commitment",
                "parties": [initiator, partner],
                "action": "breakfast",
                "location": venue,
                "time": config.invitation_meal_tick,
                "day_offset": 1,
                "accepted_by": [partner] if accepted else [],
            }
        )
    elif len(dialogue) < 4:
        dialogue.append(
            {"speaker": partner, "text": _CLOSINGS[rng.integers(len(_CLOSINGS))]}
        )

    return {"dialogue": dialogue, "intents": intents}


class ScriptedOracle:
    """
    Decision backend driven by the scripted rules. Stateless, so it can be shared by
    every agent executor.

    Parameters
    ----------
    seed : int
        Run seed.
    config : OracleConfig, optional
        Utility and conversation constants.
    """

    name = "oracle"

    def __init__(self, seed: int, config: OracleConfig = OracleConfig()):
        self.seed = seed
        self.config = config

    def decide(self, context: DecisionContext, prompt: Optional[str] = None) -> Dict[str, Any]:
        return oracle_decide(context, self.seed, self.config).to_response()

    def converse(
        self, context: ConversationContext, prompt: Optional[str] = None
    ) -> Dict[str, Any]:
        return oracle_converse(context, self.seed, self.config)
