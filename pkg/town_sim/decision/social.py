from __future__ import annotations

from typing import Iterable, Optional

from town_sim.decision.validation import ActionKind
from town_sim.world.scenario import OracleConfig, Persona

BUSY_WORKING = "busy with working"
LOW_ENERGY = "low-energy"
RUSHING = "rushing"


def skip_reason(
    last_action: Optional[str], energy: int, config: OracleConfig
) -> Optional[str]:
    """
    Why an agent will not start or join a conversation this tick, or None if it is
    free to talk.

    Parameters
    ----------
    last_action : str, optional
        The action the agent executed this tick.
    energy : int
        Current energy.
    config : OracleConfig
        Holds the minimum energy for a conversation.
    """
    if last_action == ActionKind.WORK.value:
        return BUSY_WORKING
    if energy <= config.conversation_min_energy:
        return LOW_ENERGY
    if last_action == ActionKind.TRAVEL.value:
        return RUSHING
    return None


def choose_partner(persona: Persona, candidates: Iterable[str]) -> Optional[str]:
    """
    The candidate the agent is closest to; ties go to the lexicographically smaller
    name.
    """
    ranked = sorted(
        (c for c in candidates if c != persona.name),
        key=lambda c: (-persona.proximity(c), c),
    )
    return ranked[0] if ranked else None
