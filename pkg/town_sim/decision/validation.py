from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from town_sim.decision.context import (
    ConversationContext,
    DecisionContext,
    LocationOption,
    MenuOption,
)
from town_sim.memory.commitments import Conversation, ConversationIntent
from town_sim.world.scenario import LocationKind

logger = logging.getLogger(__name__)

HOME_MEAL_ITEMS = ("home meal", "home-cooked meal")

_FENCED_BLOCK = re.compile(r"```[ \t]*([A-Za-z0-9_-]*)[ \t]*\n(.*?)```", re.DOTALL)


class ActionKind(str, Enum):
    EAT = "eat"
    TRAVEL = "travel"
    WORK = "work"
    SHOP_GROCERIES = "shop_groceries"
    REST = "rest"
    CONVERSE = "converse"
    SKIP = "skip"


class FailureReason(str, Enum):
    MALFORMED_RESPONSE = "malformed_response"
    UNKNOWN_LOCATION = "unknown_location"
    UNKNOWN_MENU_ITEM = "unknown_menu_item"
    INSUFFICIENT_FUNDS = "insufficient_funds"
    SHOP_CLOSED = "shop_closed"
    INVALID_TARGET = "invalid_target"
    NON_FOOD_ACTION = "non_food_action"


@dataclass(frozen=True)
class ValidationFailure:
    """
    Why a backend response was rejected.

    Attributes
    ----------
    reason : FailureReason
        Typed reason.
    field : str
        The offending field of the response.
    detail : str
        The offending value or a short explanation.
    """

    reason: FailureReason
    field: str
    detail: str = ""

    def describe(self) -> str:
        return f"{self.reason.value} ({self.field}: {self.detail})"


@dataclass(frozen=True)
class ActionPlan:
    """
    A validated decision, ready for the engine.

    Attributes
    ----------
    time : int
        Tick of day the plan is for.
    action : ActionKind
        What to do.
    target : str
        Canonical location name, or an agent name for `converse`.
    item : str, optional
        Menu item for `eat` and `shop_groceries` at a shop.
    description, energy_considerations, reasoning : str
        Free text from the backend.
    """

    time: int
    action: ActionKind
    target: str
    item: Optional[str] = None
    description: str = ""
    energy_considerations: str = ""
    reasoning: str = ""

    def to_response(self) -> Dict[str, Any]:
        response = {
            "time": self.time,
            "action": self.action.value,
            "target": self.target,
            "description": self.description,
            "energy_considerations": self.energy_considerations,
            "reasoning": self.reasoning,
        }
        if self.item is not None:
            response["item"] = self.item
        return response


class PlanResponse(BaseModel):
    """
    Structured action response from a decision backend. Unknown extra fields are
    ignored.

    Attributes
    ----------
    time : int
        Tick of day.
    action : ActionKind
        One of the supported actions.
    target : str
        Location or agent name.
    description : str
        What the agent does.
    energy_considerations : str
        How the plan affects energy.
    reasoning : str, optional
        Why, by default empty.
    item : str, optional
        Menu item, by default None.
    """

    model_config = ConfigDict(extra="ignore")

    time: int
    action: ActionKind
    target: str
    description: str
    energy_considerations: str
    reasoning: str = ""
    item: Optional[str] = None


class DialogueLine(BaseModel):
    model_config = ConfigDict(extra="ignore")

    speaker: str
    text: str


class IntentResponse(BaseModel):
    model_config = ConfigDict(extra="ignore")

    kind: str
    parties: List[str]
    action: str = ""
    location: str = ""
    time: int = 0
    day_offset: int = Field(default=0, ge=0)
    accepted_by: Optional[List[str]] = None


class ConversationResponse(BaseModel):
    model_config = ConfigDict(extra="ignore")

    dialogue: List[DialogueLine] = Field(min_length=1)
    intents: List[IntentResponse] = []


def extract_structured_block(raw: Any) -> Union[Dict[str, Any], ValidationFailure]:
    """
    Get the structured object out of a raw backend response.

    A mapping is taken as is. Text must either be a bare JSON object or contain
    exactly one fenced block holding one.
    """
    if isinstance(raw, dict):
        return raw
    if not isinstance(raw, str):
        return ValidationFailure(
            FailureReason.MALFORMED_RESPONSE, "response", type(raw).__name__
        )

    text = raw.strip()
    blocks = _FENCED_BLOCK.findall(text)
    if len(blocks) > 1:
        return ValidationFailure(
            FailureReason.MALFORMED_RESPONSE,
            "response",
            f"expected one structured block, found {len(blocks)}",
        )
    if len(blocks) == 1:
        text = blocks[0][1].strip()

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        return ValidationFailure(FailureReason.MALFORMED_RESPONSE, "response", str(e))
    if not isinstance(data, dict):
        return ValidationFailure(
            FailureReason.MALFORMED_RESPONSE, "response", "not an object"
        )
    return data


def _fail(reason: FailureReason, field: str, detail: Any) -> ValidationFailure:
    failure = ValidationFailure(reason, field, str(detail))
    logger.debug("Plan rejected: %s", failure.describe())
    return failure


def _pick_item(
    option: LocationOption,
    item_name: Optional[str],
    predicate,
) -> Tuple[Optional[MenuOption], Optional[ValidationFailure]]:
    """
    Find the named menu item, or the cheapest one matching `predicate` when the
    response names none.
    """
    if item_name is not None:
        menu_option = option.menu_option(item_name.strip())
        if menu_option is None:
            return None, _fail(FailureReason.UNKNOWN_MENU_ITEM, "item", item_name)
        return menu_option, None

    candidates = sorted(
        (m for m in option.menu if predicate(m)), key=lambda m: (m.price, m.item_name)
    )
    if not candidates:
        candidates = sorted(option.menu, key=lambda m: (m.price, m.item_name))
    return candidates[0], None


def validate_plan(
    raw: Any, context: DecisionContext
) -> Union[ActionPlan, ValidationFailure]:
    """
    Ground a backend response against the world.

    A plan is accepted only if its target is a whitelisted location (or a known agent
    for `converse`), the item it buys is on the shop's menu, the shop is open and the
    agent can pay for it. During an emergency only `eat` and `skip` are accepted.

    Parameters
    ----------
    raw : Any
        The backend's raw response; a mapping or text.
    context : DecisionContext
        The context the response was produced for.

    Returns
    -------
    ActionPlan | ValidationFailure
        The accepted plan, or the typed reason of the rejection.
    """
    data = extract_structured_block(raw)
    if isinstance(data, ValidationFailure):
        logger.debug("Plan rejected: %s", data.describe())
        return data

    try:
        response = PlanResponse.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or "response"
        return _fail(FailureReason.MALFORMED_RESPONSE, field, error["msg"])

    if not 0 <= response.time < context.ticks_per_day:
        return _fail(FailureReason.MALFORMED_RESPONSE, "time", response.time)

    def accept(target: str, item: Optional[str] = None) -> ActionPlan:
        return ActionPlan(
            time=response.time,
            action=response.action,
            target=target,
            item=item,
            description=response.description,
            energy_considerations=response.energy_considerations,
            reasoning=response.reasoning,
        )

    action = response.action
    food_actions = (ActionKind.EAT, ActionKind.SKIP)
    if context.emergency and action not in food_actions:
        return _fail(FailureReason.NON_FOOD_ACTION, "action", action.value)

    if action == ActionKind.SKIP:
        return accept(context.position)

    if action == ActionKind.CONVERSE:
        target = response.target.strip()
        if target not in context.known_agents:
            return _fail(FailureReason.INVALID_TARGET, "target", response.target)
        return accept(target)

    target = context.resolve_location(response.target)
    if target is None:
        return _fail(FailureReason.UNKNOWN_LOCATION, "target", response.target)
    option = context.location_option(target)
    persona = context.persona

    if action == ActionKind.TRAVEL:
        return accept(target)

    if action == ActionKind.REST:
        if target not in (context.position, persona.residence):
            return _fail(FailureReason.INVALID_TARGET, "target", target)
        return accept(target)

    if action == ActionKind.WORK:
        if persona.workplace is None or target != persona.workplace:
            return _fail(FailureReason.INVALID_TARGET, "target", target)
        return accept(target)

    if action == ActionKind.EAT and target == persona.residence:
        if response.item is not None and response.item.strip().lower() not in (
            HOME_MEAL_ITEMS
        ):
            return _fail(FailureReason.UNKNOWN_MENU_ITEM, "item", response.item)
        return accept(target)

    required_kind = (
        LocationKind.DINING if action == ActionKind.EAT else LocationKind.GROCERY
    )
    if option.kind != required_kind:
        return _fail(FailureReason.INVALID_TARGET, "target", target)
    if not option.is_open:
        return _fail(FailureReason.SHOP_CLOSED, "target", target)

    if action == ActionKind.EAT:
        menu_option, failure = _pick_item(option, response.item, lambda m: m.is_meal)
    else:
        menu_option, failure = _pick_item(
            option, response.item, lambda m: m.grocery_restore > 0
        )
    if failure is not None:
        return failure
    if menu_option.price > context.needs.money:
        return _fail(FailureReason.INSUFFICIENT_FUNDS, "item", menu_option.item_name)
    return accept(target, menu_option.item_name)


def parse_conversation(
    raw: Any, context: ConversationContext
) -> Union[Conversation, ValidationFailure]:
    """
    Parse a conversation response into a transcript. Grounding of the intents
    happens later, when commitments are extracted.
    """
    data = extract_structured_block(raw)
    if isinstance(data, ValidationFailure):
        return data
    try:
        response = ConversationResponse.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or "response"
        return _fail(FailureReason.MALFORMED_RESPONSE, field, error["msg"])

    return Conversation(
        initiator=context.initiator,
        partner=context.partner,
        location=context.location,
        day=context.day,
        tick=context.tick,
        dialogue=tuple((line.speaker, line.text) for line in response.dialogue),
        intents=tuple(
            ConversationIntent(
                kind=intent.kind,
                parties=tuple(intent.parties),
                action=intent.action,
                location=intent.location,
                time=intent.time,
                day_offset=intent.day_offset,
                accepted_by=(
                    tuple(intent.accepted_by) if intent.accepted_by is not None else None
                ),
            )
            for intent in response.intents
        ),
    )
