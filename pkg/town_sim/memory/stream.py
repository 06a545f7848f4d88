from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional

from town_sim.world.scenario import MemoryConfig


class MemoryKind(str, Enum):
    EVENT = "EVENT"
    REFLECTION = "REFLECTION"
    CONVERSATION = "CONVERSATION"
    PURCHASE = "PURCHASE"


@dataclass(frozen=True)
class MemoryEntry:
    """
    One observation in an agent's memory stream.

    Attributes
    ----------
    id : int
        Sequence number within the stream, assigned on ingestion.
    day, tick : int
        When the observation was made.
    kind : MemoryKind
        Category of the observation.
    source_agent : str
        The agent the observation came from.
    participants : FrozenSet[str]
        Everyone involved.
    content : str
        Text of the observation.
    payload : Dict[str, Any], optional
        Structured data, e.g. purchase cost and location or a commitment record.
    """

    id: int
    day: int
    tick: int
    kind: MemoryKind
    source_agent: str
    participants: FrozenSet[str] = frozenset()
    content: str = ""
    payload: Optional[Dict[str, Any]] = None

    def absolute_tick(self, ticks_per_day: int) -> int:
        return (self.day - 1) * ticks_per_day + self.tick

    def to_record(self, owner: str) -> Dict[str, Any]:
        return {
            "agent": owner,
            "id": self.id,
            "day": self.day,
            "tick": self.tick,
            "kind": self.kind.value,
            "source_agent": self.source_agent,
            "participants": sorted(self.participants),
            "content": self.content,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class RetrievalQuery:
    """
    What the caller wants to remember.

    Attributes
    ----------
    day, tick : int
        The current clock.
    participants : FrozenSet[str], optional
        When given, only these names count towards relationship proximity.
    max_n : int
        Number of entries to return; at least 1.
    """

    day: int
    tick: int
    participants: Optional[FrozenSet[str]] = None
    max_n: int = 10


def decay(age_ticks: float, half_life: float) -> float:
    return 2.0 ** (-age_ticks / half_life)


def entry_proximity(
    entry: MemoryEntry,
    owner: str,
    relationships: Mapping[str, float],
    participants: Optional[FrozenSet[str]] = None,
) -> float:
    """
    Highest relationship score among the people in an entry, the owner excluded.
    """
    people = set(entry.participants) | {entry.source_agent}
    people.discard(owner)
    if participants is not None:
        people &= set(participants)
    return max((relationships.get(p, 0.0) for p in people), default=0.0)


def score_entry(
    entry: MemoryEntry,
    now: int,
    owner: str,
    relationships: Mapping[str, float],
    config: MemoryConfig,
    ticks_per_day: int,
    participants: Optional[FrozenSet[str]] = None,
) -> float:
    """
    score = w_t * 2^(-age / half_life) + w_r * proximity
    """
    age = max(0, now - entry.absolute_tick(ticks_per_day))
    return config.w_t * decay(age, config.half_life) + config.w_r * entry_proximity(
        entry, owner, relationships, participants
    )


@dataclass
class MemoryStream:
    """
    Append-only memory of one agent. The stream is owned by the agent's executor
    and must be used under the agent's guard.

    Parameters
    ----------
    owner : str
        Name of the agent.
    relationships : Mapping[str, float]
        Proximity scores of the owner towards other agents.
    config : MemoryConfig
        Retrieval weights.
    ticks_per_day : int
        Used to turn (day, tick) into absolute ticks.
    """

    owner: str
    relationships: Mapping[str, float]
    config: MemoryConfig
    ticks_per_day: int
    entries: List[MemoryEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def ingest(self, entry: MemoryEntry) -> MemoryEntry:
        """
        Append an entry, stamping it with the next sequence number.
        """
        stored = replace(entry, id=len(self.entries))
        self.entries.append(stored)
        return stored

    def record(
        self,
        day: int,
        tick: int,
        kind: MemoryKind,
        content: str,
        source_agent: Optional[str] = None,
        participants: Iterable[str] = (),
        payload: Optional[Dict[str, Any]] = None,
    ) -> MemoryEntry:
        return self.ingest(
            MemoryEntry(
                id=-1,
                day=day,
                tick=tick,
                kind=kind,
                source_agent=source_agent or self.owner,
                participants=frozenset(participants),
                content=content,
                payload=payload,
            )
        )

    def retrieve(self, query: RetrievalQuery) -> List[MemoryEntry]:
        """
        Top entries by decayed relevance. Ties are broken by recency, then by the
        higher id. Entries from the future and, when a horizon is configured, entries
        older than the horizon are not considered.
        """
        if query.max_n < 1:
            raise ValueError("max_n must be at least 1")

        now = (query.day - 1) * self.ticks_per_day + query.tick
        horizon = self.config.horizon
        scored = []
        for entry in self.entries:
            moment = entry.absolute_tick(self.ticks_per_day)
            if moment > now:
                continue
            if horizon is not None and now - moment > horizon:
                continue
            score = score_entry(
                entry,
                now,
                self.owner,
                self.relationships,
                self.config,
                self.ticks_per_day,
                query.participants,
            )
            scored.append((-score, -moment, -entry.id, entry))

        scored.sort(key=lambda row: row[:3])
        return [row[3] for row in scored[: query.max_n]]

    def recent_visit_count(self, location: str, day: int, tick: int) -> int:
        """
        Purchases made at a location inside the habit window.
        """
        now = (day - 1) * self.ticks_per_day + tick
        window = self.config.habit_window_days * self.ticks_per_day
        return sum(
            1
            for entry in self.entries
            if entry.kind == MemoryKind.PURCHASE
            and entry.payload is not None
            and entry.payload.get("shop") == location
            and 0 <= now - entry.absolute_tick(self.ticks_per_day) < window
        )

    def to_lines(self) -> List[str]:
        return [
            json.dumps(entry.to_record(self.owner), sort_keys=True, separators=(",", ":"))
            for entry in self.entries
        ]
