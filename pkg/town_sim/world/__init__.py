from .loader import Scenario, dump_scenario, load_scenario, scenario_from_dict
from .scenario import (
    BackendKind,
    DiscountWindow,
    GridCoord,
    IncomeKind,
    Location,
    LocationKind,
    MenuItem,
    Persona,
    RunMode,
    Shop,
    ShopKind,
    SimConfig,
)
from .town_map import TownMap, travel_distance
