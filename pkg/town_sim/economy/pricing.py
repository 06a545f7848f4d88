from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Union

from town_sim.exception import PricingException

CENT = Decimal("0.01")

Rate = Union[float, str, Decimal]


def to_cents(value: Union[int, float, str, Decimal]) -> int:
    """
    Convert a dollar amount into integer cents, rounding half-up.

    Parameters
    ----------
    value : int | float | str | Decimal
        Dollar amount, e.g. 12, 9.6 or "10.50".

    Returns
    -------
    int
        The amount in cents.

    Raises
    ------
    PricingException
        If the value is not a number.
    """
    if isinstance(value, bool):
        raise PricingException(f"Not a currency amount: {value!r}")
    try:
        dollars = Decimal(str(value).strip().lstrip("$"))
    except InvalidOperation:
        raise PricingException(f"Not a currency amount: {value!r}")
    if not dollars.is_finite():
        raise PricingException(f"Not a currency amount: {value!r}")
    return int(dollars.quantize(CENT, rounding=ROUND_HALF_UP) * 100)


def format_cents(cents: int) -> str:
    """
    Format integer cents as a dollar string with two decimals, e.g. 960 -> "9.60".
    """
    sign = "-" if cents < 0 else ""
    whole, fraction = divmod(abs(int(cents)), 100)
    return f"{sign}{whole}.{fraction:02d}"


def parse_cents(text: str) -> int:
    """
    Parse a dollar string written by `format_cents` back into cents.
    """
    return to_cents(text)


def final_price(base: int, discount: Rate) -> int:
    """
    Final price of an item after its discount, F = P_base x (1 - D), rounded half-up
    to the cent.

    Parameters
    ----------
    base : int
        Base price in cents. Must be positive.
    discount : float | str | Decimal
        Discount rate in [0, 1).

    Returns
    -------
    int
        The final price in cents.

    Raises
    ------
    PricingException
        If the base price is not positive or the discount is out of range.
    """
    if base <= 0:
        raise PricingException(f"Base price must be positive, got {base}")

    rate = Decimal(str(discount))
    if not (Decimal(0) <= rate < Decimal(1)):
        raise PricingException(f"invalid discount rate: {discount}")

    # Work in exact decimals on the cent grid; only the final value is rounded
    price = (Decimal(int(base)) * (Decimal(1) - rate)).quantize(
        Decimal(1), rounding=ROUND_HALF_UP
    )
    return int(price)
