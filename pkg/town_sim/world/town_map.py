from __future__ import annotations

from functools import cached_property
from typing import Dict, List, Optional, Tuple

import networkx

from town_sim.exception import UnknownLocationException
from town_sim.world.scenario import (
    GridCoord,
    Location,
    LocationKind,
    Shop,
    ShopKind,
    _Frozen,
)


class CorridorGraph:
    """
    Shortest-path distances on the town's travel corridor.

    Waypoints are the nodes of the corridor. Consecutive waypoints are joined by an edge
    weighted by their Manhattan length. A location that is not itself a waypoint is
    attached to its nearest waypoint; ties go to the earliest waypoint in the path.

    Parameters
    ----------
    locations : Dict[str, Location]
        The locations of the town.
    travel_paths : Tuple[GridCoord, ...]
        The ordered corridor waypoints.
    """

    def __init__(
        self, locations: Dict[str, Location], travel_paths: Tuple[GridCoord, ...]
    ):
        self.graph = networkx.Graph()
        waypoints = [GridCoord(*p) for p in travel_paths]
        self.graph.add_nodes_from(waypoints)
        for a, b in zip(waypoints, waypoints[1:]):
            if a != b:
                self.graph.add_edge(a, b, weight=a.manhattan(b))

        for location in locations.values():
            coord = GridCoord(*location.coord)
            if coord in self.graph or not waypoints:
                self.graph.add_node(coord)
                continue
            nearest = min(waypoints, key=lambda w: coord.manhattan(w))
            self.graph.add_edge(coord, nearest, weight=coord.manhattan(nearest))

        self._coords = {name: GridCoord(*loc.coord) for name, loc in locations.items()}
        self._lengths = dict(
            networkx.all_pairs_dijkstra_path_length(self.graph, weight="weight")
        )

    def distance(self, a: str, b: str) -> int:
        if a == b:
            return 0
        source, target = self._coords[a], self._coords[b]
        return int(self._lengths[source][target])

    def path(self, a: str, b: str) -> List[GridCoord]:
        return networkx.dijkstra_path(
            self.graph, self._coords[a], self._coords[b], weight="weight"
        )


class TownMap(_Frozen):
    """
    The static town: locations, the travel corridor and the shops.

    Attributes
    ----------
    name : str
        Name of the scenario the town comes from.
    description : str
        Free-text description.
    locations : Dict[str, Location]
        Locations by name.
    travel_paths : Tuple[GridCoord, ...]
        Ordered corridor waypoints.
    shops : Dict[str, Shop]
        Shops by location name.
    """

    name: str = "scenario"
    description: str = ""
    locations: Dict[str, Location]
    travel_paths: Tuple[GridCoord, ...] = ()
    shops: Dict[str, Shop] = {}

    @cached_property
    def corridor(self) -> CorridorGraph:
        return CorridorGraph(self.locations, self.travel_paths)

    @cached_property
    def alias_index(self) -> Dict[str, str]:
        aliases = {}
        for location in self.locations.values():
            for alias in location.aliases:
                aliases[alias] = location.name
        return aliases

    def resolve(self, name: str) -> str:
        """
        Canonical location name for a name or alias.

        Raises
        ------
        UnknownLocationException
            If neither a location nor an alias has that name.
        """
        if name in self.locations:
            return name
        canonical = self.alias_index.get(name)
        if canonical is None:
            raise UnknownLocationException(name)
        return canonical

    def try_resolve(self, name: Optional[str]) -> Optional[str]:
        if name is None:
            return None
        try:
            return self.resolve(name.strip())
        except UnknownLocationException:
            return None

    def location(self, name: str) -> Location:
        return self.locations[self.resolve(name)]

    def shop(self, name: str) -> Optional[Shop]:
        return self.shops.get(self.resolve(name))

    def dining_shops(self) -> List[Shop]:
        return [s for _, s in sorted(self.shops.items()) if s.kind == ShopKind.DINING]

    def grocery_shops(self) -> List[Shop]:
        return [s for _, s in sorted(self.shops.items()) if s.kind == ShopKind.GROCERY]

    def names_of_kind(self, kind: LocationKind) -> List[str]:
        return sorted(n for n, loc in self.locations.items() if loc.kind == kind)

    def distance(self, a: str, b: str) -> int:
        return travel_distance(self, a, b)


def travel_distance(town_map: TownMap, from_name: str, to_name: str) -> int:
    """
    Distance in grid units between two locations along the corridor.

    Parameters
    ----------
    town_map : TownMap
        The town.
    from_name : str
        Name or alias of the origin.
    to_name : str
        Name or alias of the destination.

    Returns
    -------
    int
        Shortest corridor distance; 0 only when both names refer to the same place.

    Raises
    ------
    UnknownLocationException
        If either name is not in the town.
    """
    a = town_map.resolve(from_name)
    b = town_map.resolve(to_name)
    return town_map.corridor.distance(a, b)
