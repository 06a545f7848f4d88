from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Dict, Iterator, List, Tuple

from town_sim.exception import LockOrderException

AGENT_RANK = 0
LOCATION_RANK = 1


class Guard:
    """
    Exclusive-access guard of one agent's state or one location's occupant set.

    Guards are ordered by (rank, name): every agent guard comes before every location
    guard, and guards of the same rank are ordered by name.
    """

    def __init__(self, rank: int, name: str):
        self.rank = rank
        self.name = name
        self._lock = threading.Lock()

    @property
    def key(self) -> Tuple[int, str]:
        return (self.rank, self.name)

    def __repr__(self) -> str:
        kind = "agent" if self.rank == AGENT_RANK else "location"
        return f"Guard({kind}={self.name!r})"


class GuardRegistry:
    """
    Creates the guards of a run and enforces the global acquisition order.

    Every thread's held guards are tracked. `hold` acquires guards in the global order
    and refuses to take a guard that sorts before one the thread already holds, so no
    two threads can wait on each other. In audit mode, `assert_held` also checks that
    state is only touched under its guard.

    Parameters
    ----------
    audit : bool, optional
        Enforce `assert_held`, by default False.
    """

    def __init__(self, audit: bool = False):
        self.audit = audit
        self._guards: Dict[Tuple[int, str], Guard] = {}
        self._registry_lock = threading.Lock()
        self._local = threading.local()
        self.acquisitions = 0

    def agent(self, name: str) -> Guard:
        return self._get(AGENT_RANK, name)

    def location(self, name: str) -> Guard:
        return self._get(LOCATION_RANK, name)

    def _get(self, rank: int, name: str) -> Guard:
        with self._registry_lock:
            guard = self._guards.get((rank, name))
            if guard is None:
                guard = Guard(rank, name)
                self._guards[(rank, name)] = guard
            return guard

    def held(self) -> List[Guard]:
        if not hasattr(self._local, "stack"):
            self._local.stack = []
        return self._local.stack

    def is_held(self, guard: Guard) -> bool:
        return guard in self.held()

    def assert_held(self, guard: Guard):
        """
        Raises
        ------
        LockOrderException
            In audit mode, if the calling thread does not hold `guard`.
        """
        if self.audit and not self.is_held(guard):
            raise LockOrderException(f"{guard} is not held by the current thread")

    @contextmanager
    def hold(self, *guards: Guard) -> Iterator[None]:
        """
        Acquire guards in the global order and release them in reverse. Guards the
        thread already holds are not acquired again.

        Raises
        ------
        LockOrderException
            If a guard would be acquired after a guard that sorts after it.
        """
        stack = self.held()
        wanted = sorted(
            {g.key: g for g in guards if g not in stack}.values(), key=lambda g: g.key
        )
        if wanted and stack and wanted[0].key < max(g.key for g in stack):
            raise LockOrderException(
                f"Cannot acquire {wanted[0]} while holding {stack[-1]}"
            )

        acquired: List[Guard] = []
        try:
            for guard in wanted:
                guard._lock.acquire()
                stack.append(guard)
                acquired.append(guard)
            with self._registry_lock:
                self.acquisitions += len(acquired)
            yield
        finally:
            for guard in reversed(acquired):
                stack.remove(guard)
                guard._lock.release()
