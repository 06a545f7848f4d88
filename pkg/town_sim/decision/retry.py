from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, List, Protocol, Tuple

from town_sim.decision.context import ConversationContext, DecisionContext
from town_sim.decision.oracle import oracle_converse, oracle_decide
from town_sim.decision.prompts import assemble_prompt
from town_sim.decision.validation import (
    ActionPlan,
    FailureReason,
    ValidationFailure,
    parse_conversation,
    validate_plan,
)
from town_sim.exception import (
    BackendRequestException,
    BackendUnavailableException,
    InvariantBreachException,
)
from town_sim.memory.commitments import Conversation
from town_sim.parameters import Parameters
from town_sim.world.scenario import OracleConfig

logger = logging.getLogger(__name__)


class DecisionBackend(Protocol):
    """
    Anything that turns a prompt into a raw structured response. Implementations
    must be safe to call from several agent executors at once.
    """

    name: str

    def decide(self, context: DecisionContext, prompt: str) -> Any: ...

    def converse(self, context: ConversationContext, prompt: str) -> Any: ...


class BackendHealth:
    """
    Counts consecutive transport failures of a backend over a run. Once the count
    reaches `unavailable_after` the backend is considered permanently unavailable.
    """

    def __init__(self, unavailable_after: int = Parameters.UNAVAILABLE_AFTER):
        self.unavailable_after = unavailable_after
        self.consecutive_failures = 0
        self._lock = threading.Lock()

    def succeeded(self):
        with self._lock:
            self.consecutive_failures = 0

    def failed(self, error: Exception):
        with self._lock:
            self.consecutive_failures += 1
            count = self.consecutive_failures
        if count >= self.unavailable_after:
            raise BackendUnavailableException(
                f"Decision backend failed {count} times in a row: {error}"
            )


@dataclass
class Decision:
    """
    Outcome of a decision.

    Attributes
    ----------
    plan : ActionPlan
        The validated plan.
    attempts : int
        Backend calls made; at most max_retries + 1.
    fell_back : bool
        Whether the plan came from the scripted oracle after every attempt failed.
    failures : List[ValidationFailure]
        Why earlier attempts were rejected, in order.
    """

    plan: ActionPlan
    attempts: int
    fell_back: bool = False
    failures: List[ValidationFailure] = field(default_factory=list)


def decide_with_retry(
    backend: DecisionBackend,
    context: DecisionContext,
    max_retries: int,
    seed: int,
    oracle_config: OracleConfig = OracleConfig(),
    health: BackendHealth | None = None,
) -> Decision:
    """
    Ask the backend for a plan until one passes validation.

    A rejected plan is re-prompted with the reason of the rejection appended to the
    prompt. When every attempt failed, the scripted oracle's plan is used instead.

    Parameters
    ----------
    backend : DecisionBackend
        The backend to ask.
    context : DecisionContext
        The agent's context.
    max_retries : int
        Re-prompts allowed after the first attempt.
    seed : int
        Run seed, used by the fallback.
    oracle_config : OracleConfig, optional
        Constants of the fallback.
    health : BackendHealth, optional
        Transport failure counter shared by the run.

    Returns
    -------
    Decision
        The accepted plan with its attempt history.

    Raises
    ------
    BackendUnavailableException
        If the backend has failed at transport level too many times in a row.
    """
    if max_retries < 0:
        raise ValueError("max_retries must not be negative")

    failures: List[ValidationFailure] = []
    attempt_context = context
    for attempt in range(1, max_retries + 2):
        prompt = assemble_prompt(attempt_context)
        try:
            raw = backend.decide(attempt_context, prompt)
        except BackendRequestException as e:
            logger.warning(
                "Attempt %d for %s failed at transport level: %s", attempt, context.agent, e
            )
            if health is not None:
                health.failed(e)
            failures.append(
                ValidationFailure(FailureReason.MALFORMED_RESPONSE, "response", str(e))
            )
            continue
        if health is not None:
            health.succeeded()

        result = validate_plan(raw, context)
        if isinstance(result, ActionPlan):
            logger.debug(
                "Attempt %d for %s accepted: %s %s",
                attempt,
                context.agent,
                result.action.value,
                result.target,
            )
            return Decision(plan=result, attempts=attempt, failures=failures)

        logger.info(
            "Attempt %d for %s rejected: %s", attempt, context.agent, result.describe()
        )
        failures.append(result)
        attempt_context = attempt_context.with_feedback(
            f"Your previous answer was rejected: {result.describe()}."
        )

    plan = oracle_decide(context, seed, oracle_config)
    check = validate_plan(plan.to_response(), context)
    if isinstance(check, ValidationFailure):
        raise InvariantBreachException(
            f"Fallback plan for {context.agent} is invalid: {check.describe()}"
        )
    logger.info(
        "Falling back to the scripted plan for %s after %d attempts",
        context.agent,
        max_retries + 1,
    )
    return Decision(plan=plan, attempts=max_retries + 1, fell_back=True, failures=failures)


def converse_with_fallback(
    backend: DecisionBackend,
    context: ConversationContext,
    seed: int,
    oracle_config: OracleConfig = OracleConfig(),
    health: BackendHealth | None = None,
) -> Tuple[Conversation, bool]:
    """
    Ask the backend for a conversation. An unusable response is replaced by the
    scripted conversation.

    Returns
    -------
    Tuple[Conversation, bool]
        The conversation and whether it came from the fallback.
    """
    prompt = assemble_prompt(context)
    try:
        raw = backend.converse(context, prompt)
    except BackendRequestException as e:
        if health is not None:
            health.failed(e)
        raw = None
    else:
        if health is not None:
            health.succeeded()

    if raw is not None:
        conversation = parse_conversation(raw, context)
        if isinstance(conversation, Conversation):
            return conversation, False
        logger.info(
            "Conversation of %s rejected: %s", context.initiator, conversation.describe()
        )

    fallback = parse_conversation(oracle_converse(context, seed, oracle_config), context)
    return fallback, True
