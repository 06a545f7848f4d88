import pytest

from town_sim.exception import ScenarioException, UnknownLocationException
from town_sim.world.loader import dump_scenario, load_scenario, scenario_from_dict
from town_sim.world.scenario import IncomeKind, LocationKind, ShopKind


def test_reference_scenario_loads(reference_scenario):
    town_map = reference_scenario.town_map
    assert len(town_map.locations) == 10
    assert len(reference_scenario.personas) == 11
    assert sorted(town_map.shops) == [
        "Coffee Shop",
        "Fried Chicken",
        "Grocery Mart",
        "Local Diner",
    ]
    assert reference_scenario.sim.days == 7
    assert reference_scenario.sim.seed == 42


def test_location_kinds_are_inferred(reference_scenario):
    locations = reference_scenario.town_map.locations
    assert locations["Local Diner"].kind == LocationKind.DINING
    assert locations["Grocery Mart"].kind == LocationKind.GROCERY
    assert locations["Town Office"].kind == LocationKind.WORKPLACE
    assert locations["Harbor Lofts"].kind == LocationKind.RESIDENCE
    assert locations["Central Park"].kind == LocationKind.LEISURE


def test_money_is_held_in_cents(reference_scenario):
    chicken = reference_scenario.town_map.shops["Fried Chicken"]
    assert chicken.menu_item("fried chicken meal").base_price == 1200
    assert chicken.effective_price("fried chicken meal", 2) == 1200
    assert chicken.effective_price("fried chicken meal", 3) == 960
    assert chicken.effective_price("fried chicken meal", 4) == 960
    assert chicken.effective_price("fried chicken meal", 5) == 1200

    grace = next(p for p in reference_scenario.personas if p.name == "Grace Park")
    assert grace.income_kind == IncomeKind.MONTHLY
    assert grace.income_amount == 300000


def test_baseline_has_no_promotion(baseline_scenario):
    for shop in baseline_scenario.town_map.shops.values():
        assert shop.discount_schedule == ()
    assert baseline_scenario.sim.seed == 42


def test_alias_resolves_to_location(reference_scenario):
    town_map = reference_scenario.town_map
    assert town_map.resolve("Local Café") == "Coffee Shop"
    assert town_map.resolve("Local Cafe") == "Coffee Shop"
    assert town_map.try_resolve("Sunset Bistro") is None
    with pytest.raises(UnknownLocationException):
        town_map.resolve("Sunset Bistro")


def test_corridor_distances(reference_scenario):
    town_map = reference_scenario.town_map
    assert town_map.distance("Town Office", "Local Diner") == 3
    assert town_map.distance("Town Office", "Fried Chicken") == 6
    assert town_map.distance("Oak View Condos", "Coffee Shop") == 3
    assert town_map.distance("Local Café", "Coffee Shop") == 0


def test_distance_is_symmetric(reference_scenario):
    town_map = reference_scenario.town_map
    names = sorted(town_map.locations)
    for a in names:
        for b in names:
            assert town_map.distance(a, b) == town_map.distance(b, a)
            if a != b:
                assert town_map.distance(a, b) > 0


def test_distance_is_a_metric(reference_scenario):
    town_map = reference_scenario.town_map
    names = sorted(town_map.locations)
    assert len(names) == 10
    distance = {(a, b): town_map.distance(a, b) for a in names for b in names}
    for a in names:
        for b in names:
            assert (distance[a, b] == 0) == (a == b)
            for c in names:
                assert distance[a, c] <= distance[a, b] + distance[b, c], (a, b, c)


def test_tiny_town_distances(tiny_town):
    town_map = tiny_town.town_map
    assert town_map.distance("Home", "Diner") == 4
    assert town_map.distance("Home", "Office") == 6
    assert town_map.distance("Diner", "Office") == 2
    assert town_map.shops["Market"].kind == ShopKind.GROCERY


def test_dump_and_load_gives_equal_scenario(reference_scenario, tmp_path):
    path = tmp_path / "copy.yaml"
    dump_scenario(reference_scenario, path)
    loaded = load_scenario(path)
    assert loaded.town_map.locations == reference_scenario.town_map.locations
    assert loaded.town_map.shops == reference_scenario.town_map.shops
    assert loaded.personas == reference_scenario.personas
    assert loaded.sim == reference_scenario.sim


def test_unknown_residence_names_key_path(tiny_town_dict):
    tiny_town_dict["agents"][1]["residence"] = "Castle"
    with pytest.raises(ScenarioException) as e:
        scenario_from_dict(tiny_town_dict)
    assert e.value.key_path == "agents.1.residence"


def test_unknown_relationship(tiny_town_dict):
    tiny_town_dict["agents"][0]["relationships"] = {"Zed": 0.5}
    with pytest.raises(ScenarioException) as e:
        scenario_from_dict(tiny_town_dict)
    assert e.value.key_path == "agents.0.relationships.Zed"


def test_duplicate_agent_name(tiny_town_dict):
    tiny_town_dict["agents"][1]["name"] = "Ann"
    tiny_town_dict["agents"][0]["relationships"] = {}
    tiny_town_dict["agents"][1]["relationships"] = {}
    with pytest.raises(ScenarioException, match="duplicate name"):
        scenario_from_dict(tiny_town_dict)


def test_invalid_discount_rate(tiny_town_dict):
    tiny_town_dict["shops"]["Diner"]["discount_schedule"][0]["rate"] = 1.2
    with pytest.raises(ScenarioException) as e:
        scenario_from_dict(tiny_town_dict)
    assert e.value.key_path.startswith("shops.Diner.discount_schedule")
    assert "invalid discount rate" in str(e.value)


def test_shared_coordinates_are_rejected(tiny_town_dict):
    tiny_town_dict["map"]["locations"]["Market"] = [2, 0]
    with pytest.raises(ScenarioException) as e:
        scenario_from_dict(tiny_town_dict)
    assert e.value.key_path == "map.locations.Market.coord"


def test_locations_need_a_corridor(tiny_town_dict):
    tiny_town_dict["map"]["travel_paths"] = []
    with pytest.raises(ScenarioException) as e:
        scenario_from_dict(tiny_town_dict)
    assert e.value.key_path == "map.travel_paths"


def test_missing_map_section(tiny_town_dict):
    del tiny_town_dict["map"]
    with pytest.raises(ScenarioException) as e:
        scenario_from_dict(tiny_town_dict)
    assert e.value.key_path == "map"


def test_duplicate_yaml_key_is_rejected(tmp_path):
    path = tmp_path / "dup.yaml"
    path.write_text(
        "map:\n"
        "  locations:\n"
        "    Home: [0, 0]\n"
        "    Home: [1, 0]\n"
        "  travel_paths: [[0, 0]]\n",
        encoding="utf-8",
    )
    with pytest.raises(ScenarioException, match="duplicate name"):
        load_scenario(path)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioException, match="not found"):
        load_scenario(tmp_path / "nowhere.yaml")
