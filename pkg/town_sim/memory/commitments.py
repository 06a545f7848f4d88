from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

from town_sim.world.town_map import TownMap


class CommitmentStatus(str, Enum):
    PENDING = "pending"
    FULFILLED = "fulfilled"
    BROKEN = "broken"
    RESCHEDULED = "rescheduled"


ALLOWED_TRANSITIONS = {
    CommitmentStatus.PENDING: {
        CommitmentStatus.FULFILLED,
        CommitmentStatus.BROKEN,
        CommitmentStatus.RESCHEDULED,
    },
    CommitmentStatus.RESCHEDULED: {CommitmentStatus.PENDING},
    CommitmentStatus.FULFILLED: set(),
    CommitmentStatus.BROKEN: set(),
}


@dataclass
class Commitment:
    """
    A scheduled social agreement.

    Attributes
    ----------
    id : str
        Identifier, unique within a run.
    parties : FrozenSet[str]
        The agents who agreed to meet.
    action : str
        What they will do, e.g. "breakfast".
    location : str
        Canonical location name.
    day, tick : int
        When they meet.
    created_day, created_tick : int
        When the agreement was made.
    status : CommitmentStatus
        Current status.
    history : List[str]
        Every status the commitment went through, in order.
    """

    id: str
    parties: FrozenSet[str]
    action: str
    location: str
    day: int
    tick: int
    created_day: int
    created_tick: int
    status: CommitmentStatus = CommitmentStatus.PENDING
    history: List[str] = field(default_factory=lambda: [CommitmentStatus.PENDING.value])

    def scheduled(self, ticks_per_day: int) -> int:
        return (self.day - 1) * ticks_per_day + self.tick

    def to_payload(self) -> Dict[str, object]:
        return {
            "id": self.id,
            "parties": sorted(self.parties),
            "action": self.action,
            "location": self.location,
            "day": self.day,
            "tick": self.tick,
            "status": self.status.value,
        }


@dataclass(frozen=True)
class ConversationIntent:
    """
    A structured intent attached to a conversation by the decision backend. The
    first party is the proposer; the others are invited.
    """

    kind: str
    parties: Tuple[str, ...]
    action: str = ""
    location: str = ""
    time: int = 0
    day_offset: int = 0
    accepted_by: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class Conversation:
    """
    Transcript of one conversation.
    """

    initiator: str
    partner: str
    location: str
    day: int
    tick: int
    dialogue: Tuple[Tuple[str, str], ...]
    intents: Tuple[ConversationIntent, ...] = ()

    def to_payload(self) -> Dict[str, object]:
        return {
            "partner": self.partner,
            "location": self.location,
            "exchanges": len(self.dialogue),
            "dialogue": [{"speaker": s, "text": t} for s, t in self.dialogue],
        }


@dataclass(frozen=True)
class RejectedIntent:
    intent: ConversationIntent
    reason: str
    field: str
    value: str


@dataclass
class ExtractionResult:
    commitments: List[Commitment] = field(default_factory=list)
    rejected: List[RejectedIntent] = field(default_factory=list)
    declined: List[Tuple[str, str]] = field(default_factory=list)


def extract_commitments(
    conversation: Conversation,
    participants: Sequence[str],
    town_map: TownMap,
    known_agents: Sequence[str],
    ticks_per_day: int,
) -> ExtractionResult:
    """
    Turn the commitment intents of a conversation into commitments, one per
    accepting respondent.

    Parameters
    ----------
    conversation : Conversation
        The transcript with its structured intents.
    participants : Sequence[str]
        Agents taking part in the conversation.
    town_map : TownMap
        Used to ground the meeting place; aliases are accepted.
    known_agents : Sequence[str]
        Every agent of the scenario.
    ticks_per_day : int
        Length of a day.

    Returns
    -------
    ExtractionResult
        Accepted commitments, intents rejected by grounding and declined invitations.
    """
    result = ExtractionResult()
    now = (conversation.day - 1) * ticks_per_day + conversation.tick

    for index, intent in enumerate(conversation.intents):
        if intent.kind != "commitment":
            continue

        parties = list(dict.fromkeys(intent.parties))
        unknown = [p for p in parties if p not in known_agents]
        if len(parties) < 2 or unknown:
            result.rejected.append(
                RejectedIntent(intent, "invalid_target", "parties", ", ".join(unknown))
            )
            continue
        if parties[0] not in participants:
            result.rejected.append(
                RejectedIntent(intent, "invalid_target", "parties", parties[0])
            )
            continue

        location = town_map.try_resolve(intent.location)
        if location is None:
            result.rejected.append(
                RejectedIntent(intent, "unknown_location", "location", intent.location)
            )
            continue

        if not 0 <= intent.time < ticks_per_day or intent.day_offset < 0:
            result.rejected.append(
                RejectedIntent(intent, "malformed_response", "time", str(intent.time))
            )
            continue

        proposer, respondents = parties[0], parties[1:]
        accepted = (
            respondents
            if intent.accepted_by is None
            else [r for r in respondents if r in intent.accepted_by]
        )
        for respondent in respondents:
            if respondent not in accepted:
                result.declined.append((proposer, respondent))

        for respondent in accepted:
            commitment = Commitment(
                id=(
                    f"{conversation.day}.{conversation.tick}.{index}."
                    f"{proposer}>{respondent}"
                ),
                parties=frozenset({proposer, respondent}),
                action=intent.action or "meet",
                location=location,
                day=conversation.day + intent.day_offset,
                tick=intent.time,
                created_day=conversation.day,
                created_tick=conversation.tick,
            )

            # A time that has already passed moves to the same time tomorrow
            if commitment.scheduled(ticks_per_day) < now:
                commitment.status = CommitmentStatus.RESCHEDULED
                commitment.history.append(CommitmentStatus.RESCHEDULED.value)
                commitment.day += 1
                commitment.status = CommitmentStatus.PENDING
                commitment.history.append(CommitmentStatus.PENDING.value)

            result.commitments.append(commitment)

    return result


class CommitmentLedger:
    """
    Every commitment of a run, shared by all agents. Status changes go through
    `transition`, which only allows pending -> fulfilled | broken | rescheduled and
    rescheduled -> pending.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._commitments: Dict[str, Commitment] = {}

    def add(self, commitment: Commitment):
        with self._lock:
            if commitment.id in self._commitments:
                raise ValueError(f"Duplicate commitment id {commitment.id}")
            self._commitments[commitment.id] = commitment

    def transition(self, commitment_id: str, status: CommitmentStatus) -> Commitment:
        """
        Move a commitment to a new status.

        Raises
        ------
        ValueError
            If the transition is not allowed.
        """
        with self._lock:
            commitment = self._commitments[commitment_id]
            if status not in ALLOWED_TRANSITIONS[commitment.status]:
                raise ValueError(
                    f"Commitment {commitment_id} cannot go from "
                    f"{commitment.status.value} to {status.value}"
                )
            commitment.status = status
            commitment.history.append(status.value)
            return commitment

    def get(self, commitment_id: str) -> Commitment:
        return self._commitments[commitment_id]

    def all(self) -> List[Commitment]:
        with self._lock:
            return sorted(self._commitments.values(), key=lambda c: c.id)

    def pending(self) -> List[Commitment]:
        return [c for c in self.all() if c.status == CommitmentStatus.PENDING]

    def pending_for(self, agent: str) -> List[Commitment]:
        return [c for c in self.pending() if agent in c.parties]

    def pending_between(self, a: str, b: str) -> List[Commitment]:
        return [c for c in self.pending() if {a, b} <= c.parties]


def settle_commitments(
    ledger: CommitmentLedger,
    co_present: Callable[[str], FrozenSet[str]],
    day: int,
    tick: int,
    ticks_per_day: int,
    unavailable: FrozenSet[str] = frozenset(),
) -> List[Commitment]:
    """
    Check pending commitments against the current positions.

    A commitment is fulfilled when all parties are at the location within one tick of
    the scheduled time. It is broken once that window has passed, or when a party can
    no longer attend that day (listed in `unavailable`, e.g. collapsed agents).

    Returns
    -------
    List[Commitment]
        The commitments whose status changed.
    """
    now = (day - 1) * ticks_per_day + tick
    changed = []
    for commitment in ledger.pending():
        scheduled = commitment.scheduled(ticks_per_day)
        if abs(now - scheduled) <= 1 and commitment.parties <= co_present(
            commitment.location
        ):
            changed.append(ledger.transition(commitment.id, CommitmentStatus.FULFILLED))
        elif now > scheduled + 1 or (
            commitment.day == day and commitment.parties & unavailable
        ):
            changed.append(ledger.transition(commitment.id, CommitmentStatus.BROKEN))
    return changed
