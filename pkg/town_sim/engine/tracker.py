from __future__ import annotations

import logging
from typing import Dict, FrozenSet, List, Optional, Set

from town_sim.engine.guards import GuardRegistry
from town_sim.exception import UnknownLocationException
from town_sim.world.town_map import TownMap

logger = logging.getLogger(__name__)


class LocationTracker:
    """
    Shared record of where every agent is.

    An agent's position changes only while its own guard is held, and a location's
    occupant set only while that location's guard is held. Moves take the guards of
    both the origin and the destination, in the global order.

    Parameters
    ----------
    town_map : TownMap
        The town.
    guards : GuardRegistry
        Guards of the run.
    """

    def __init__(self, town_map: TownMap, guards: GuardRegistry):
        self.town_map = town_map
        self.guards = guards
        self._positions: Dict[str, str] = {}
        self._occupants: Dict[str, Set[str]] = {name: set() for name in town_map.locations}

    def place(self, agent: str, location: str):
        """
        Put an agent on the map for the first time.
        """
        location = self.town_map.resolve(location)
        with self.guards.hold(self.guards.location(location)):
            self._positions[agent] = location
            self._occupants[location].add(agent)

    def position(self, agent: str) -> str:
        return self._positions[agent]

    def positions(self) -> Dict[str, str]:
        return dict(self._positions)

    def move(self, agent: str, destination: str, force: bool = False) -> bool:
        """
        Move an agent. The caller holds the agent's guard.

        Parameters
        ----------
        agent : str
            The agent.
        destination : str
            Name or alias of the destination.
        force : bool, optional
            Ignore the destination's capacity, for teleports home. By default False.

        Returns
        -------
        bool
            False if the destination is at capacity; the agent then stays put.
        """
        destination = self.town_map.resolve(destination)
        self.guards.assert_held(self.guards.agent(agent))
        origin = self._positions[agent]
        if origin == destination:
            return True

        with self.guards.hold(
            self.guards.location(origin), self.guards.location(destination)
        ):
            capacity = self.town_map.locations[destination].capacity
            full = (
                capacity is not None and len(self._occupants[destination]) >= capacity
            )
            if full and not force:
                logger.debug("%s is full, %s stays at %s", destination, agent, origin)
                return False
            self._occupants[origin].discard(agent)
            self._occupants[destination].add(agent)
            self._positions[agent] = destination
        return True

    def co_present(self, location: str) -> FrozenSet[str]:
        """
        Snapshot of the agents at a location.

        Raises
        ------
        UnknownLocationException
            If the location is not on the map.
        """
        name = self.town_map.try_resolve(location)
        if name is None:
            raise UnknownLocationException(location)
        with self.guards.hold(self.guards.location(name)):
            return frozenset(self._occupants[name])

    def locate(self, agent: str) -> Optional[str]:
        """
        Find another agent through the occupant sets, taking one location guard at a
        time. Returns None if the agent is moving and was seen nowhere.
        """
        for name in sorted(self._occupants):
            if agent in self.co_present(name):
                return name
        return None

    def occupied(self) -> List[str]:
        return sorted(name for name, agents in self._occupants.items() if agents)

    def consistency_error(self, agents: List[str]) -> Optional[str]:
        """
        Describe the first disagreement between positions and occupant sets, or
        return None if every agent is at exactly one location.
        """
        total = sum(len(agents_here) for agents_here in self._occupants.values())
        if total != len(agents):
            return f"{total} occupants for {len(agents)} agents"
        for agent in agents:
            location = self._positions.get(agent)
            if location is None:
                return f"{agent} has no position"
            if agent not in self._occupants[location]:
                return f"{agent} is not among the occupants of {location}"
        return None
