from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

from town_sim.exception import MalformedLogException


class EventKind(str, Enum):
    TRAVEL = "travel"
    PURCHASE = "purchase"
    MEAL = "meal"
    MEAL_SKIPPED = "meal_skipped"
    HOME_MEAL_REFUSED = "home_meal_refused"
    CONVERSATION = "conversation"
    SOCIAL_CHECK_SKIPPED = "social_check_skipped"
    WORK = "work"
    INCOME = "income"
    TRAVEL_REFUSED = "travel_refused"
    SLEEP = "sleep"
    DECISION = "decision"
    VALIDATION_FAILED = "validation_failed"
    EMERGENCY_REPLAN = "emergency_replan"
    COLLAPSE_TELEPORT = "collapse_teleport"
    COMMITMENT_CREATED = "commitment_created"
    COMMITMENT_FULFILLED = "commitment_fulfilled"
    COMMITMENT_BROKEN = "commitment_broken"
    COMMITMENT_RESCHEDULED = "commitment_rescheduled"
    REFLECTION = "reflection"


_FIELDS = ("day", "tick", "seq", "agent", "kind", "payload")


@dataclass(frozen=True)
class Event:
    """
    One record of the event log.

    Attributes
    ----------
    day, tick : int
        When it happened.
    seq : int
        Position in the log; the total order of the run.
    agent : str, optional
        The agent concerned.
    kind : str
        An EventKind value.
    payload : Dict[str, Any]
        Details. Amounts of money are strings such as "9.60".
    """

    day: int
    tick: int
    seq: int
    agent: Optional[str]
    kind: str
    payload: Dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        return {
            "day": self.day,
            "tick": self.tick,
            "seq": self.seq,
            "agent": self.agent,
            "kind": self.kind,
            "payload": self.payload,
        }

    def to_line(self) -> str:
        return json.dumps(
            self.to_record(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )


class EventLog:
    """
    Append-only event log. Appends from concurrent executors are serialized here, and
    the order of appends is the order of the log.
    """

    def __init__(self, events: Optional[List[Event]] = None):
        self._lock = threading.Lock()
        self._events: List[Event] = list(events or [])

    def append(
        self,
        day: int,
        tick: int,
        agent: Optional[str],
        kind: Union[EventKind, str],
        payload: Optional[Dict[str, Any]] = None,
    ) -> Event:
        kind = kind.value if isinstance(kind, EventKind) else kind
        with self._lock:
            event = Event(
                day=day,
                tick=tick,
                seq=len(self._events),
                agent=agent,
                kind=kind,
                payload=dict(payload or {}),
            )
            self._events.append(event)
        return event

    @property
    def events(self) -> List[Event]:
        with self._lock:
            return list(self._events)

    def last(self, n: int) -> List[Event]:
        with self._lock:
            return list(self._events[-n:]) if n > 0 else []

    def of_kind(self, kind: Union[EventKind, str]) -> List[Event]:
        kind = kind.value if isinstance(kind, EventKind) else kind
        return [e for e in self.events if e.kind == kind]

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def to_lines(self) -> List[str]:
        return [event.to_line() for event in self.events]

    def write_ndjson(self, path: Union[str, Path]):
        """
        Write one JSON record per line, in log order.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for line in self.to_lines():
                f.write(line + "\n")


def read_event_log(path: Union[str, Path]) -> EventLog:
    """
    Read an event log written by `EventLog.write_ndjson`.

    Raises
    ------
    MalformedLogException
        With the line number of the first record that cannot be read.
    """
    events = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedLogException(line_number, f"invalid JSON: {e.msg}")
            if not isinstance(record, dict):
                raise MalformedLogException(line_number, "record is not an object")
            missing = [key for key in _FIELDS if key not in record]
            if missing:
                raise MalformedLogException(
                    line_number, f"missing fields: {', '.join(missing)}"
                )
            if not isinstance(record["payload"], dict):
                raise MalformedLogException(line_number, "payload is not an object")
            try:
                events.append(
                    Event(
                        day=int(record["day"]),
                        tick=int(record["tick"]),
                        seq=int(record["seq"]),
                        agent=record["agent"],
                        kind=str(record["kind"]),
                        payload=record["payload"],
                    )
                )
            except (TypeError, ValueError) as e:
                raise MalformedLogException(line_number, str(e))
    return EventLog(events)
