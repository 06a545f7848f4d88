from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Tuple

import yaml
from pydantic import ValidationError

from town_sim.exception import ScenarioException
from town_sim.world.scenario import (
    LocationKind,
    Persona,
    ScenarioDocument,
    SimConfig,
    as_key_path,
)
from town_sim.world.town_map import TownMap

logger = logging.getLogger(__name__)


class Scenario(NamedTuple):
    """
    A fully validated scenario. Immutable during a run.
    """

    town_map: TownMap
    personas: Tuple[Persona, ...]
    sim: SimConfig


class _UniqueKeyLoader(yaml.SafeLoader):
    """
    YAML loader that refuses duplicate mapping keys instead of keeping the last one.
    """


def _construct_unique_mapping(loader: _UniqueKeyLoader, node: yaml.MappingNode):
    loader.flatten_mapping(node)
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in mapping:
            raise ScenarioException(
                str(key),
                f"duplicate name at line {key_node.start_mark.line + 1}",
            )
        mapping[key] = loader.construct_object(value_node, deep=True)
    return mapping


_UniqueKeyLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_unique_mapping
)


def load_scenario(path: str | Path) -> Scenario:
    """
    Load and validate a scenario file.

    Parameters
    ----------
    path : str | Path
        Path to the YAML scenario file.

    Returns
    -------
    Scenario
        The town map, the personas and the run configuration.

    Raises
    ------
    ScenarioException
        On parse failures, unknown location references, duplicate names and invalid
        values. The exception names the offending key path.
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioException("", f"scenario file not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as file:
            raw = yaml.load(file, Loader=_UniqueKeyLoader)
    except yaml.YAMLError as e:
        raise ScenarioException("", f"cannot parse scenario file: {e}")

    scenario = scenario_from_dict(raw)
    logger.info(
        "Loaded scenario %s: %d locations, %d shops, %d agents",
        scenario.town_map.name,
        len(scenario.town_map.locations),
        len(scenario.town_map.shops),
        len(scenario.personas),
    )
    return scenario


def scenario_from_dict(raw: Any) -> Scenario:
    """
    Validate an already parsed scenario document.
    """
    if not isinstance(raw, dict):
        raise ScenarioException("", "scenario must be a mapping at the top level")
    if "map" not in raw:
        raise ScenarioException("map", "missing section")

    try:
        document = ScenarioDocument.model_validate(raw)
    except ValidationError as e:
        error = e.errors()[0]
        message = error["msg"].removeprefix("Value error, ")
        raise ScenarioException(as_key_path(error["loc"]), message)

    town_map = TownMap(
        name=document.name,
        description=document.description,
        locations=document.map.locations,
        travel_paths=document.map.travel_paths,
        shops=document.shops,
    )
    _check_references(town_map, document.agents, document.sim)

    # Build the corridor once so that runs only read it
    _ = town_map.corridor
    return Scenario(town_map=town_map, personas=document.agents, sim=document.sim)


def _check_references(
    town_map: TownMap, personas: Tuple[Persona, ...], sim: SimConfig
):
    """
    Cross-reference checks that need more than one section of the document.

    Raises
    ------
    ScenarioException
        At the first failing reference.
    """
    locations = town_map.locations

    # Coordinates and aliases must identify a single location
    seen_coords: Dict[Tuple[int, int], str] = {}
    seen_aliases: Dict[str, str] = {}
    for name, location in locations.items():
        coord = tuple(location.coord)
        if coord in seen_coords:
            raise ScenarioException(
                f"map.locations.{name}.coord",
                f"same coordinates as '{seen_coords[coord]}'",
            )
        seen_coords[coord] = name
        for alias in location.aliases:
            if alias in locations or alias in seen_aliases:
                raise ScenarioException(
                    f"map.locations.{name}.aliases", f"duplicate name '{alias}'"
                )
            seen_aliases[alias] = name

    if len(locations) > 1 and len(town_map.travel_paths) == 0:
        raise ScenarioException(
            "map.travel_paths", "at least one waypoint is needed to connect locations"
        )

    tpd = sim.ticks_per_day
    for name, shop in town_map.shops.items():
        if name not in locations:
            raise ScenarioException(f"shops.{name}", f"unknown location '{name}'")
        kind = locations[name].kind
        if kind.value != shop.kind.value:
            raise ScenarioException(
                f"shops.{name}.kind",
                f"shop kind '{shop.kind.value}' does not match location kind "
                f"'{kind.value}'",
            )
        if shop.opening_hours[1] > tpd:
            raise ScenarioException(
                f"shops.{name}.opening_hours", f"close tick exceeds {tpd} ticks per day"
            )
    for name, location in locations.items():
        if location.kind in (LocationKind.DINING, LocationKind.GROCERY) and (
            name not in town_map.shops
        ):
            raise ScenarioException(
                f"map.locations.{name}", "dining and grocery locations need a shop"
            )

    names: List[str] = []
    for index, persona in enumerate(personas):
        key = f"agents.{index}"
        if persona.name in names:
            raise ScenarioException(f"{key}.name", f"duplicate name '{persona.name}'")
        names.append(persona.name)
        if persona.residence not in locations:
            raise ScenarioException(
                f"{key}.residence", f"unknown location '{persona.residence}'"
            )
        if persona.workplace is not None and persona.workplace not in locations:
            raise ScenarioException(
                f"{key}.workplace", f"unknown location '{persona.workplace}'"
            )
        start, end = persona.work_hours
        if not 0 <= start < end <= tpd:
            raise ScenarioException(
                f"{key}.work_hours", f"must satisfy 0 <= start < end <= {tpd}"
            )

    for index, persona in enumerate(personas):
        for other in persona.relationships:
            if other not in names or other == persona.name:
                raise ScenarioException(
                    f"agents.{index}.relationships.{other}", f"unknown agent '{other}'"
                )

    for name, shop in town_map.shops.items():
        if shop.owner is not None and shop.owner not in names:
            raise ScenarioException(f"shops.{name}.owner", f"unknown agent '{shop.owner}'")

    schedule = sim.schedule
    if schedule.sleep_tick > tpd:
        raise ScenarioException("sim.schedule.sleep_tick", f"exceeds {tpd} ticks per day")
    for meal, (_, end) in schedule.meal_windows.items():
        if end > tpd:
            raise ScenarioException(
                f"sim.schedule.meal_windows.{meal}", f"exceeds {tpd} ticks per day"
            )


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """
    Plain document form of a scenario; loading it back gives an equal scenario.
    """
    town_map = scenario.town_map
    return {
        "name": town_map.name,
        "description": town_map.description,
        "map": {
            "locations": {
                name: location.model_dump(mode="json", exclude={"name"})
                for name, location in town_map.locations.items()
            },
            "travel_paths": [list(p) for p in town_map.travel_paths],
        },
        "shops": {
            name: shop.model_dump(mode="json", exclude={"location_name"})
            for name, shop in town_map.shops.items()
        },
        "agents": [persona.model_dump(mode="json") for persona in scenario.personas],
        "sim": scenario.sim.model_dump(mode="json"),
    }


def dump_scenario(scenario: Scenario, path: str | Path):
    """
    Write a scenario back to a YAML file.
    """
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(
            scenario_to_dict(scenario), file, sort_keys=False, allow_unicode=True
        )

