from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, Tuple

from town_sim.economy.needs import NeedsState
from town_sim.economy.pricing import final_price, format_cents
from town_sim.exception import PurchaseException
from town_sim.world.scenario import IncomeKind, Persona, Shop


@dataclass(frozen=True)
class PurchaseEvent:
    """
    Immutable record of a purchase.

    Attributes
    ----------
    day, tick : int
        When the purchase happened.
    agent : str
        Who bought.
    shop : str
        Location name of the shop.
    shop_kind : str
        "dining" or "grocery".
    item : str
        Menu item bought.
    base_price, final_price : int
        Prices in cents.
    discount_rate : float
        Discount applied.
    energy_before, energy_after, grocery_before, grocery_after : int
        Needs around the purchase.
    money_before, money_after : int
        Cash around the purchase, in cents.
    """

    day: int
    tick: int
    agent: str
    shop: str
    shop_kind: str
    item: str
    base_price: int
    discount_rate: float
    final_price: int
    energy_before: int
    energy_after: int
    grocery_before: int
    grocery_after: int
    money_before: int
    money_after: int

    def to_payload(self) -> Dict[str, Any]:
        payload = asdict(self)
        for key in ("day", "tick", "agent"):
            payload.pop(key)
        for key in ("base_price", "final_price", "money_before", "money_after"):
            payload[key] = format_cents(payload[key])
        return payload


def execute_purchase(
    agent: str,
    needs: NeedsState,
    shop: Shop,
    item_name: str,
    day: int,
    tick: int,
) -> Tuple[NeedsState, PurchaseEvent]:
    """
    Buy one item at a shop. The caller is responsible for the agent being at the
    shop and for holding the guards.

    Parameters
    ----------
    agent : str
        Name of the buyer.
    needs : NeedsState
        Buyer's needs before the purchase.
    shop : Shop
        The shop.
    item_name : str
        The menu item.
    day, tick : int
        Current time.

    Returns
    -------
    Tuple[NeedsState, PurchaseEvent]
        Needs after the purchase and its record.

    Raises
    ------
    PurchaseException
        If the shop is closed, the item is not on the menu or the buyer cannot pay.
    """
    if not shop.is_open(tick):
        raise PurchaseException(
            "shop_closed", f"{shop.location_name} is closed at tick {tick}"
        )

    item = shop.menu_item(item_name)
    if item is None:
        raise PurchaseException(
            "unknown_menu_item", f"{item_name} is not sold at {shop.location_name}"
        )

    rate = shop.discount_rate(item_name, day)
    price = final_price(item.base_price, rate)
    if price > needs.money:
        raise PurchaseException(
            "insufficient_funds",
            f"{agent} cannot pay {format_cents(price)} with {format_cents(needs.money)}",
        )

    after = replace(
        needs,
        money=needs.money - price,
        energy=needs.energy + item.energy_restore,
        grocery=needs.grocery + item.grocery_restore,
    )
    event = PurchaseEvent(
        day=day,
        tick=tick,
        agent=agent,
        shop=shop.location_name,
        shop_kind=shop.kind.value,
        item=item_name,
        base_price=item.base_price,
        discount_rate=rate,
        final_price=price,
        energy_before=needs.energy,
        energy_after=after.energy,
        grocery_before=needs.grocery,
        grocery_after=after.grocery,
        money_before=needs.money,
        money_after=after.money,
    )
    return after, event


class IncomeTrigger(str, Enum):
    WORK_TICK = "work_tick"
    PAYDAY = "payday"
    DAY_END = "day_end"


def accrue_income(
    persona: Persona,
    needs: NeedsState,
    trigger: IncomeTrigger,
    day: int,
    receipts: int = 0,
) -> Tuple[NeedsState, int]:
    """
    Pay an agent according to their income kind.

    Hourly earners are paid per completed work tick, monthly earners a lump sum on
    their payday, and business owners the gross receipts of their shop at day end.

    Parameters
    ----------
    persona : Persona
        The earner.
    needs : NeedsState
        Needs before payment.
    trigger : IncomeTrigger
        The event that may lead to payment.
    day : int
        Current day.
    receipts : int, optional
        Shop receipts of the day in cents, used for business owners, by default 0.

    Returns
    -------
    Tuple[NeedsState, int]
        Needs after payment and the amount paid in cents.
    """
    amount = 0
    if persona.income_kind == IncomeKind.HOURLY and trigger == IncomeTrigger.WORK_TICK:
        amount = persona.income_amount
    elif (
        persona.income_kind == IncomeKind.MONTHLY
        and trigger == IncomeTrigger.PAYDAY
        and day == persona.payday
    ):
        amount = persona.income_amount
    elif (
        persona.income_kind == IncomeKind.BUSINESS_OWNER
        and trigger == IncomeTrigger.DAY_END
    ):
        amount = receipts

    if amount == 0:
        return needs, 0
    return replace(needs, money=needs.money + amount), amount
