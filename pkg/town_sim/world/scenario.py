from __future__ import annotations

from enum import Enum
from typing import Annotated, Any, Dict, NamedTuple, Optional, Tuple

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from town_sim.economy.pricing import final_price, format_cents, to_cents
from town_sim.exception import PricingException
from town_sim.parameters import Parameters


def _validate_money(value: Any) -> int:
    try:
        return to_cents(value)
    except PricingException as e:
        raise ValueError(str(e))


# Amounts are written in dollars in scenario files and held as integer cents
Money = Annotated[
    int,
    BeforeValidator(_validate_money),
    PlainSerializer(format_cents, return_type=str, when_used="json"),
]


class GridCoord(NamedTuple):
    """
    A point on the town grid, in integer grid units.
    """

    x: int
    y: int

    def manhattan(self, other: GridCoord) -> int:
        return abs(self.x - other.x) + abs(self.y - other.y)


class LocationKind(str, Enum):
    RESIDENCE = "residence"
    DINING = "dining"
    GROCERY = "grocery"
    WORKPLACE = "workplace"
    LEISURE = "leisure"


class ShopKind(str, Enum):
    DINING = "dining"
    GROCERY = "grocery"


class IncomeKind(str, Enum):
    HOURLY = "hourly"
    MONTHLY = "monthly"
    BUSINESS_OWNER = "business_owner"


class BackendKind(str, Enum):
    ORACLE = "oracle"
    REMOTE = "remote"


class RunMode(str, Enum):
    DETERMINISTIC = "deterministic"
    PARALLEL = "parallel"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Location(_Frozen):
    """
    A named place on the town grid.

    Attributes
    ----------
    name : str
        Unique name of the location.
    coord : GridCoord
        Coordinates on the grid.
    kind : LocationKind
        What the location is used for.
    capacity : int, optional
        Maximum number of agents present at once. None means unlimited.
    aliases : Tuple[str, ...]
        Other names that refer to this location, e.g. "Local Café".
    """

    name: str
    coord: GridCoord
    kind: LocationKind
    capacity: Optional[int] = Field(default=None, gt=0)
    aliases: Tuple[str, ...] = ()


class MenuItem(_Frozen):
    """
    Something a shop sells.

    Attributes
    ----------
    item_name : str
        Name of the item.
    base_price : Money
        Price before discounts, in cents.
    energy_restore : int
        Energy gained by eating the item.
    grocery_restore : int
        Grocery units gained; 0 for prepared meals.
    """

    item_name: str
    base_price: Money
    energy_restore: int = Field(default=0, ge=0)
    grocery_restore: int = Field(default=0, ge=0)

    @field_validator("base_price")
    @classmethod
    def _positive_price(cls, value: int) -> int:
        if value <= 0:
            raise ValueError("base price must be positive")
        return value


class DiscountWindow(_Frozen):
    """
    A promotion active on an inclusive range of days.

    Attributes
    ----------
    start_day : int
        First day (1-based) of the promotion.
    end_day : int
        Last day of the promotion.
    rate : float
        Discount fraction in [0, 1).
    applies_to : str
        The item name the discount applies to, or "all".
    """

    start_day: int = Field(ge=1)
    end_day: int = Field(ge=1)
    rate: float
    applies_to: str = "all"

    @field_validator("rate")
    @classmethod
    def _rate_in_range(cls, value: float) -> float:
        if not 0 <= value < 1:
            raise ValueError("invalid discount rate")
        return value

    @model_validator(mode="after")
    def _ordered_days(self) -> DiscountWindow:
        if self.start_day > self.end_day:
            raise ValueError("start_day must not be after end_day")
        return self

    def covers(self, day: int, item_name: str) -> bool:
        return self.start_day <= day <= self.end_day and self.applies_to in (
            "all",
            item_name,
        )


class Shop(_Frozen):
    """
    A shop attached to a dining or grocery location.

    Attributes
    ----------
    location_name : str
        The location the shop occupies.
    kind : ShopKind
        Dining shops sell meals, grocery shops restock homes.
    menu : Tuple[MenuItem, ...]
        Items on sale.
    discount_schedule : Tuple[DiscountWindow, ...]
        Promotions of the shop.
    opening_hours : Tuple[int, int]
        Open tick (inclusive) and close tick (exclusive) of each day.
    owner : str, optional
        Name of the persona receiving the shop's receipts as business income.
    """

    location_name: str
    kind: ShopKind = ShopKind.DINING
    menu: Tuple[MenuItem, ...]
    discount_schedule: Tuple[DiscountWindow, ...] = ()
    opening_hours: Tuple[int, int] = (0, Parameters.TICKS_PER_DAY)
    owner: Optional[str] = None

    @model_validator(mode="after")
    def _check_menu(self) -> Shop:
        if len(self.menu) == 0:
            raise ValueError("menu must not be empty")
        names = [item.item_name for item in self.menu]
        if len(set(names)) != len(names):
            raise ValueError("duplicate menu item names")
        for window in self.discount_schedule:
            if window.applies_to != "all" and window.applies_to not in names:
                raise ValueError(
                    f"discount applies to unknown menu item '{window.applies_to}'"
                )
        open_tick, close_tick = self.opening_hours
        if not 0 <= open_tick < close_tick:
            raise ValueError("opening hours must satisfy 0 <= open < close")
        return self

    def is_open(self, tick: int) -> bool:
        open_tick, close_tick = self.opening_hours
        return open_tick <= tick < close_tick

    def menu_item(self, item_name: str) -> Optional[MenuItem]:
        return next((item for item in self.menu if item.item_name == item_name), None)

    def discount_rate(self, item_name: str, day: int) -> float:
        """
        The discount applying to an item on a day. Overlapping windows do not stack;
        the largest rate wins.
        """
        rates = [w.rate for w in self.discount_schedule if w.covers(day, item_name)]
        return max(rates, default=0.0)

    def effective_price(self, item_name: str, day: int) -> int:
        item = self.menu_item(item_name)
        if item is None:
            raise KeyError(item_name)
        return final_price(item.base_price, self.discount_rate(item_name, day))


class Persona(_Frozen):
    """
    A resident of the town.

    Attributes
    ----------
    name : str
        Unique name of the agent.
    age : int
        Age in years.
    occupation : str
        Free-text occupation.
    income_kind : IncomeKind
        How the persona is paid.
    income_amount : Money
        Pay per hour (hourly) or per month (monthly). Ignored for business owners,
        who receive their shop's receipts.
    residence : str
        Location name of the home.
    workplace : str, optional
        Location name of the workplace.
    work_hours : Tuple[int, int]
        Start tick (inclusive) and end tick (exclusive) of the working day.
    work_days : Tuple[int, ...]
        Days of the week (1 = Monday) the persona works.
    payday : int
        Day of the run on which monthly income is paid.
    deal_proneness : float
        Tendency in [0, 1] to respond to promotions.
    relationships : Dict[str, float]
        Proximity score in [0, 1] towards other agents.
    preferences : Tuple[str, ...]
        Free-text preference tags used in prompts.
    starting_money : Money
        Cash at the start of the run.
    starting_energy : int
        Energy at the start of the run.
    starting_grocery : int
        Grocery stock at home at the start of the run.
    """

    name: str
    age: int = Field(default=30, ge=0)
    occupation: str = ""
    income_kind: IncomeKind = IncomeKind.MONTHLY
    income_amount: Money = 0
    residence: str
    workplace: Optional[str] = None
    work_hours: Tuple[int, int] = Parameters.WORK_HOURS
    work_days: Tuple[int, ...] = Parameters.WORK_DAYS
    payday: int = Field(default=1, ge=1)
    deal_proneness: float = Field(default=0.5, ge=0, le=1)
    relationships: Dict[str, float] = Field(default_factory=dict)
    preferences: Tuple[str, ...] = ()
    starting_money: Money = 20000
    starting_energy: int = Field(default=Parameters.STARTING_ENERGY, ge=0, le=100)
    starting_grocery: int = Field(default=Parameters.STARTING_GROCERY, ge=0, le=100)

    @field_validator("income_amount")
    @classmethod
    def _non_negative_income(cls, value: int) -> int:
        if value < 0:
            raise ValueError("income must not be negative")
        return value

    @field_validator("starting_money")
    @classmethod
    def _non_negative_money(cls, value: int) -> int:
        if value < 0:
            raise ValueError("starting money must not be negative")
        return value

    @field_validator("relationships")
    @classmethod
    def _proximity_in_range(cls, value: Dict[str, float]) -> Dict[str, float]:
        for other, score in value.items():
            if not 0 <= score <= 1:
                raise ValueError(f"proximity to '{other}' must be within [0, 1]")
        return value

    @field_validator("work_days")
    @classmethod
    def _valid_weekdays(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(day < 1 or day > 7 for day in value):
            raise ValueError("work days are weekdays numbered 1 to 7")
        return value

    def proximity(self, other: str) -> float:
        return self.relationships.get(other, 0.0)

    def works_on(self, day: int) -> bool:
        weekday = (day - 1) % 7 + 1
        return self.workplace is not None and weekday in self.work_days

    def is_work_tick(self, day: int, tick: int) -> bool:
        start, end = self.work_hours
        return self.works_on(day) and start <= tick < end


class EconomyConfig(_Frozen):
    """
    Constants of the grocery-energy-finance triad.
    """

    base_decay: int = Field(default=Parameters.BASE_DECAY, ge=0)
    work_decay: int = Field(default=Parameters.WORK_DECAY, ge=0)
    travel_cost: int = Field(default=Parameters.TRAVEL_COST, ge=0)
    home_meal_energy: int = Field(default=Parameters.HOME_MEAL_ENERGY, ge=0)
    meal_grocery_cost: int = Field(default=Parameters.MEAL_GROCERY_COST, ge=0)
    grocery_threshold: int = Field(default=Parameters.GROCERY_THRESHOLD, ge=0)
    emergency_threshold: int = Field(default=Parameters.EMERGENCY_THRESHOLD, ge=0)
    meal_min_energy: int = Field(default=Parameters.MEAL_MIN_ENERGY, ge=0)


class MemoryConfig(_Frozen):
    """
    Retrieval weights of the memory stream. `horizon` is an optional hard cut-off
    in ticks; entries older than it are never retrieved.
    """

    half_life: float = Field(default=Parameters.HALF_LIFE, gt=0)
    w_t: float = Field(default=Parameters.WEIGHT_TIME, ge=0)
    w_r: float = Field(default=Parameters.WEIGHT_RELATIONSHIP, ge=0)
    horizon: Optional[int] = Field(default=None, gt=0)
    max_memories: int = Field(default=Parameters.MAX_MEMORIES, ge=1)
    habit_window_days: int = Field(default=Parameters.HABIT_WINDOW_DAYS, ge=1)


class OracleConfig(_Frozen):
    """
    Constants of the scripted oracle's utility and conversation rules.
    """

    discount_bonus: float = Parameters.DISCOUNT_BONUS
    distance_cost: float = Parameters.DISTANCE_COST
    habit_bonus: float = Parameters.HABIT_BONUS
    conversation_min_energy: int = Parameters.CONVERSATION_MIN_ENERGY
    invitation_tick: int = Parameters.INVITATION_TICK
    invitation_meal_tick: int = Parameters.INVITATION_MEAL_TICK
    invitation_min_proximity: float = Field(
        default=Parameters.INVITATION_MIN_PROXIMITY, ge=0, le=1
    )


class ScheduleConfig(_Frozen):
    """
    The daily rhythm of the town.
    """

    wake_tick: int = Field(default=Parameters.WAKE_TICK, ge=0)
    sleep_tick: int = Field(default=Parameters.SLEEP_TICK, ge=1)
    meal_windows: Dict[str, Tuple[int, int]] = Field(
        default_factory=lambda: dict(Parameters.MEAL_WINDOWS)
    )
    weekend_days: Tuple[int, ...] = Parameters.WEEKEND_DAYS
    afternoon: Tuple[int, int] = Parameters.AFTERNOON

    @model_validator(mode="after")
    def _check_windows(self) -> ScheduleConfig:
        if self.wake_tick >= self.sleep_tick:
            raise ValueError("wake_tick must be before sleep_tick")
        for meal, (start, end) in self.meal_windows.items():
            if start >= end:
                raise ValueError(f"meal window '{meal}' must satisfy start < end")
        return self

    def meal_window_at(self, tick: int) -> Optional[str]:
        for meal, (start, end) in sorted(
            self.meal_windows.items(), key=lambda kv: kv[1]
        ):
            if start <= tick < end:
                return meal
        return None

    def is_awake(self, tick: int) -> bool:
        return self.wake_tick <= tick < self.sleep_tick

    def is_weekend(self, day: int) -> bool:
        return (day - 1) % 7 + 1 in self.weekend_days


class RemoteConfig(_Frozen):
    """
    Non-secret settings of the remote decision backend. Environment variables fill
    anything left empty; the API key is read from the environment only.
    `unavailable_after` consecutive transport failures abort the run.
    """

    endpoint: Optional[str] = None
    model: Optional[str] = None
    temperature: Optional[float] = None
    timeout: Optional[float] = Field(default=None, gt=0)
    max_in_flight: Optional[int] = Field(default=None, ge=1)
    unavailable_after: int = Field(default=Parameters.UNAVAILABLE_AFTER, ge=1)


class SimConfig(_Frozen):
    """
    Run-level configuration from the `sim` section of a scenario.

    Attributes
    ----------
    days : int
        Number of days to simulate.
    ticks_per_day : int
        Ticks per day; one tick is one hour by default.
    seed : int
        Seed for every random draw in the run.
    backend : BackendKind
        Which decision backend to use.
    mode : RunMode
        Deterministic single-threaded or parallel execution.
    max_retries : int
        Re-prompts allowed after a rejected plan.
    substitution_tolerance : float
        Relative total-market change under which a promotion is substitution-dominant.
    """

    days: int = Field(default=Parameters.DAYS, ge=0)
    ticks_per_day: int = Field(default=Parameters.TICKS_PER_DAY, gt=0)
    seed: int = Parameters.SEED
    backend: BackendKind = BackendKind.ORACLE
    mode: RunMode = RunMode.DETERMINISTIC
    max_retries: int = Field(default=Parameters.MAX_RETRIES, ge=0)
    substitution_tolerance: float = Field(
        default=Parameters.SUBSTITUTION_TOLERANCE, gt=0
    )
    economy: EconomyConfig = Field(default_factory=EconomyConfig)
    memory: MemoryConfig = Field(default_factory=MemoryConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    remote: RemoteConfig = Field(default_factory=RemoteConfig)


class MapSection(_Frozen):
    locations: Dict[str, Location] = Field(default_factory=dict)
    travel_paths: Tuple[GridCoord, ...] = ()


class ScenarioDocument(_Frozen):
    """
    The scenario file as written on disk. Locations may be given as a bare `[x, y]`
    pair, in which case the kind is inferred from the shops and personas using it.
    """

    name: str = "scenario"
    description: str = ""
    map: MapSection
    shops: Dict[str, Shop] = Field(default_factory=dict)
    agents: Tuple[Persona, ...] = ()
    sim: SimConfig = Field(default_factory=SimConfig)

    @model_validator(mode="before")
    @classmethod
    def _expand_shorthand(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        shops = data.get("shops") or {}
        agents = data.get("agents") or []

        # Shops are keyed by their location name
        if isinstance(shops, dict):
            data["shops"] = {
                key: {"location_name": key, **value} if isinstance(value, dict) else value
                for key, value in shops.items()
            }

        map_section = data.get("map")
        if not isinstance(map_section, dict):
            return data
        locations = map_section.get("locations") or {}
        if not isinstance(locations, dict):
            return data

        residences = {a.get("residence") for a in agents if isinstance(a, dict)}
        workplaces = {a.get("workplace") for a in agents if isinstance(a, dict)}

        expanded = {}
        for key, value in locations.items():
            if isinstance(value, (list, tuple)):
                value = {"coord": list(value)}
            if isinstance(value, dict):
                value = {"name": key, **value}
                if "kind" not in value:
                    value["kind"] = _infer_kind(key, shops, residences, workplaces)
            expanded[key] = value
        data["map"] = {**map_section, "locations": expanded}
        return data


def _infer_kind(name: str, shops: Any, residences: set, workplaces: set) -> str:
    if isinstance(shops, dict) and name in shops:
        shop = shops[name]
        if isinstance(shop, dict):
            return shop.get("kind", ShopKind.DINING.value)
        return ShopKind.DINING.value
    if name in residences:
        return LocationKind.RESIDENCE.value
    if name in workplaces:
        return LocationKind.WORKPLACE.value
    return LocationKind.LEISURE.value


def as_key_path(loc: Tuple[Any, ...]) -> str:
    """
    Turn a pydantic error location into a dotted key path.
    """
    return ".".join(str(part) for part in loc)

