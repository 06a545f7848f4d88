from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from town_sim.parameters import Parameters
from town_sim.world.scenario import EconomyConfig


def clamp(value: int, low: int, high: int) -> int:
    return max(low, min(high, value))


@dataclass(frozen=True)
class NeedsState:
    """
    The grocery-energy-finance triad of one agent.

    Attributes
    ----------
    energy : int
        Energy units in [0, 100].
    grocery : int
        Grocery stock at home in [0, 100].
    money : int
        Cash in cents; never negative.
    """

    energy: int
    grocery: int
    money: int

    def __post_init__(self):
        if self.money < 0:
            raise ValueError(f"money must not be negative, got {self.money}")
        object.__setattr__(
            self, "energy", clamp(self.energy, 0, Parameters.MAX_ENERGY)
        )
        object.__setattr__(
            self, "grocery", clamp(self.grocery, 0, Parameters.MAX_GROCERY)
        )

    def with_energy(self, energy: int) -> NeedsState:
        return replace(self, energy=energy)


class ActivityKind(str, Enum):
    IDLE = "idle"
    TRAVEL = "travel"
    WORK = "work"


@dataclass(frozen=True)
class Activity:
    """
    What an agent did during a tick, for energy accounting.
    """

    kind: ActivityKind
    distance: int = 0

    @classmethod
    def idle(cls) -> Activity:
        return cls(ActivityKind.IDLE)

    @classmethod
    def travel(cls, distance: int) -> Activity:
        return cls(ActivityKind.TRAVEL, distance)

    @classmethod
    def work(cls) -> Activity:
        return cls(ActivityKind.WORK)


def tick_decay(needs: NeedsState, activity: Activity, config: EconomyConfig) -> NeedsState:
    """
    Hourly energy decay. Every awake hour costs the basal decay, travel adds its
    per-unit cost and work adds the work decay. Grocery is untouched.

    Parameters
    ----------
    needs : NeedsState
        Current needs.
    activity : Activity
        The tick's activity.
    config : EconomyConfig
        Decay constants.

    Returns
    -------
    NeedsState
        Needs after decay, energy clamped at 0.
    """
    cost = config.base_decay
    if activity.kind == ActivityKind.TRAVEL:
        cost += activity.distance * config.travel_cost
    elif activity.kind == ActivityKind.WORK:
        cost += config.work_decay
    return needs.with_energy(needs.energy - cost)


@dataclass(frozen=True)
class HomeMealOutcome:
    """
    Result of eating at home.

    Attributes
    ----------
    needs : NeedsState
        Needs after the meal; unchanged when refused.
    eaten : bool
        False if there were not enough groceries.
    shopping_needed : bool
        True when the grocery stock is below the shopping threshold afterwards.
    """

    needs: NeedsState
    eaten: bool
    shopping_needed: bool


def home_meal(needs: NeedsState, config: EconomyConfig) -> HomeMealOutcome:
    """
    Cook a meal from the grocery stock at home.
    """
    if needs.grocery < config.meal_grocery_cost:
        return HomeMealOutcome(needs=needs, eaten=False, shopping_needed=True)

    after = replace(
        needs,
        grocery=needs.grocery - config.meal_grocery_cost,
        energy=needs.energy + config.home_meal_energy,
    )
    return HomeMealOutcome(
        needs=after,
        eaten=True,
        shopping_needed=after.grocery < config.grocery_threshold,
    )


class FallbackAction(str, Enum):
    NONE = "none"
    EMERGENCY = "emergency"
    COLLAPSE = "collapse"


def energy_fallback(needs: NeedsState, config: EconomyConfig) -> FallbackAction:
    """
    The emergency ladder, evaluated after decay. At or below the threshold the next
    decision must be about food; at zero the agent collapses.
    """
    if needs.energy <= 0:
        return FallbackAction.COLLAPSE
    if needs.energy <= config.emergency_threshold:
        return FallbackAction.EMERGENCY
    return FallbackAction.NONE
