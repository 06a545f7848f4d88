from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from town_sim.decision.context import ConversationContext, DecisionContext, PromptKind
from town_sim.decision.oracle import hour_text
from town_sim.decision.validation import ActionKind
from town_sim.economy.pricing import format_cents

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"

WHITELIST_HEADER = "Only choose from the following known locations:"

_TEMPLATES = {
    PromptKind.DAILY_PLAN: "daily_plan.j2",
    PromptKind.DINING: "dining.j2",
    PromptKind.WORK: "work.j2",
    PromptKind.CONVERSATION: "conversation.j2",
}

_environment = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    undefined=StrictUndefined,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    autoescape=False,
)
_environment.filters["cents"] = format_cents


def _decision_variables(context: DecisionContext) -> Dict[str, Any]:
    if context.emergency:
        actions = [ActionKind.EAT.value, ActionKind.SKIP.value]
    else:
        actions = [action.value for action in ActionKind]
    work_start, work_end = context.persona.work_hours
    return {
        "agent": context.agent,
        "persona": context.persona,
        "needs": context.needs,
        "money": format_cents(context.needs.money),
        "economy": context.economy,
        "position": context.position,
        "day": context.day,
        "day_off": context.day_off,
        "afternoon": context.afternoon,
        "clock": hour_text(context.tick),
        "ticks_per_day": context.ticks_per_day,
        "work_start": f"{work_start}:00",
        "work_end": f"{work_end}:00",
        "emergency": context.emergency,
        "meal_due": context.meal_due,
        "meal_window_end": context.meal_window_end,
        "shopping_needed": context.shopping_needed,
        "must_eat_out_or_shop": context.must_eat_out_or_shop,
        "locations": context.locations,
        "known_agents": context.known_agents,
        "memories": context.memories,
        "commitments": context.commitments,
        "actions": actions,
        "feedback": context.feedback,
    }


def _conversation_variables(context: ConversationContext) -> Dict[str, Any]:
    variables = {
        key: getattr(context, key)
        for key in (
            "initiator",
            "partner",
            "initiator_persona",
            "partner_persona",
            "location",
            "day",
            "proximity",
            "locations",
            "memories",
            "pending_between",
        )
    }
    variables["clock"] = hour_text(context.tick)
    return variables


def assemble_prompt(context: Union[DecisionContext, ConversationContext]) -> str:
    """
    Render the prompt of a decision or conversation context.

    Rendering is deterministic: the same context always gives the same text. Every
    prompt lists the known locations under the line "Only choose from the following
    known locations:", each exactly once.

    Parameters
    ----------
    context : DecisionContext | ConversationContext
        The context to render.

    Returns
    -------
    str
        The prompt text.
    """
    template = _environment.get_template(_TEMPLATES[context.prompt_kind])
    if isinstance(context, ConversationContext):
        prompt = template.render(**_conversation_variables(context))
        agent = context.initiator
    else:
        prompt = template.render(**_decision_variables(context))
        agent = context.agent

    logger.debug(
        "Assembled %s prompt for %s: %d characters",
        context.prompt_kind.value,
        agent,
        len(prompt),
    )
    return prompt


def whitelist_section(prompt: str) -> str:
    """
    The part of a prompt listing the known locations.
    """
    start = prompt.index(WHITELIST_HEADER) + len(WHITELIST_HEADER)
    end = prompt.find("\n## ", start)
    return prompt[start:] if end == -1 else prompt[start:end]
