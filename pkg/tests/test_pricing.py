from decimal import Decimal

import pytest

from town_sim.economy.pricing import final_price, format_cents, parse_cents, to_cents
from town_sim.exception import PricingException


@pytest.mark.parametrize(
    "value, expected",
    [
        (12, 1200),
        (9.6, 960),
        ("10.50", 1050),
        ("$4.50", 450),
        (Decimal("0.005"), 1),
        ("0.004", 0),
    ],
)
def test_to_cents(value, expected):
    assert to_cents(value) == expected


@pytest.mark.parametrize("value", ["ten dollars", True, float("nan"), "inf"])
def test_to_cents_rejects_non_numbers(value):
    with pytest.raises(PricingException):
        to_cents(value)


@pytest.mark.parametrize(
    "cents, text",
    [(960, "9.60"), (0, "0.00"), (5, "0.05"), (120000, "1200.00"), (-250, "-2.50")],
)
def test_format_cents(cents, text):
    assert format_cents(cents) == text
    assert parse_cents(text) == cents


def test_twenty_percent_off_twelve_dollars():
    assert final_price(1200, 0.2) == 960


def test_no_discount_keeps_base_price():
    assert final_price(1050, 0) == 1050


def test_final_price_rounds_half_up():
    # 3.45 x 0.5 = 1.725
    assert final_price(345, 0.5) == 173
    # 3.35 x 0.9 = 3.015
    assert final_price(335, "0.1") == 302


@pytest.mark.parametrize("rate", [-0.1, 1, 1.5])
def test_final_price_rejects_rate_out_of_range(rate):
    with pytest.raises(PricingException, match="invalid discount rate"):
        final_price(1200, rate)


def test_final_price_rejects_non_positive_base():
    with pytest.raises(PricingException):
        final_price(0, 0.2)


def test_final_price_never_exceeds_base():
    for base in (1, 99, 350, 1200, 10001):
        for rate in ("0", "0.05", "0.2", "0.5", "0.99"):
            price = final_price(base, rate)
            assert 0 <= price <= base
