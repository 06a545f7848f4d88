from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import pandas

from town_sim.economy.pricing import format_cents, parse_cents
from town_sim.engine.event_log import Event, EventKind, EventLog
from town_sim.exception import MalformedLogException, PricingException, ReportMismatchException

DINING = "dining"

PURCHASE_COLUMNS = [
    "day",
    "tick",
    "seq",
    "agent",
    "shop",
    "shop_kind",
    "item",
    "base_price",
    "discount_rate",
    "final_price",
]

MARKET_SHARE_COLUMNS = ["day", "shop", "revenue", "transactions", "share", "market_total"]


@dataclass
class DailySales:
    """
    Sales of one day in one market.

    Attributes
    ----------
    day : int
        Day of the run.
    revenue : Dict[str, int]
        Revenue per shop in cents.
    transactions : Dict[str, int]
        Number of purchases per shop.
    share : Dict[str, float]
        Market share per shop. Sums to 1 when the market total is positive.
    total : int
        Market size in cents.
    """

    day: int
    revenue: Dict[str, int] = field(default_factory=dict)
    transactions: Dict[str, int] = field(default_factory=dict)
    share: Dict[str, float] = field(default_factory=dict)
    total: int = 0


def _purchase_row(event: Event) -> Dict[str, object]:
    payload = event.payload
    try:
        return {
            "day": event.day,
            "tick": event.tick,
            "seq": event.seq,
            "agent": event.agent,
            "shop": str(payload["shop"]),
            "shop_kind": str(payload.get("shop_kind", DINING)),
            "item": str(payload.get("item", "")),
            "base_price": parse_cents(payload.get("base_price", payload["final_price"])),
            "discount_rate": float(payload.get("discount_rate", 0.0)),
            "final_price": parse_cents(payload["final_price"]),
        }
    except KeyError as e:
        raise MalformedLogException(event.seq + 1, f"purchase without {e.args[0]}")
    except (PricingException, TypeError, ValueError) as e:
        raise MalformedLogException(event.seq + 1, f"bad purchase record: {e}")


def purchases_frame(log: Union[EventLog, Iterable[Event]]) -> pandas.DataFrame:
    """
    One row per purchase event. Prices are in cents.

    Raises
    ------
    MalformedLogException
        If a purchase record lacks its shop or price. The line number is the
        record's position in the serialized log.
    """
    rows = [_purchase_row(e) for e in log if e.kind == EventKind.PURCHASE.value]
    return pandas.DataFrame(rows, columns=PURCHASE_COLUMNS)


def last_day(log: Union[EventLog, Iterable[Event]]) -> int:
    return max((e.day for e in log), default=0)


def daily_sales(
    log: Union[EventLog, Iterable[Event]], shop_kind: Optional[str] = DINING
) -> List[DailySales]:
    """
    Fold the purchases of a log into daily revenue and market share per shop.

    Every day from 1 to the last day of the log is reported, and every shop with a
    purchase in the market appears on every day, with zeros where nothing was sold.

    Parameters
    ----------
    log : EventLog
        The event log.
    shop_kind : str, optional
        Market to report, by default the dining market. None covers every shop.

    Returns
    -------
    List[DailySales]
        One entry per day.
    """
    events = list(log)
    days = last_day(events)
    purchases = purchases_frame(events)
    if shop_kind is not None:
        purchases = purchases[purchases["shop_kind"] == shop_kind]
    shops = sorted(purchases["shop"].unique())

    grouped = purchases.groupby(["day", "shop"])["final_price"].agg(["sum", "count"])
    sales = []
    for day in range(1, days + 1):
        revenue = {}
        transactions = {}
        for shop in shops:
            if (day, shop) in grouped.index:
                revenue[shop] = int(grouped.loc[(day, shop), "sum"])
                transactions[shop] = int(grouped.loc[(day, shop), "count"])
            else:
                revenue[shop] = 0
                transactions[shop] = 0
        total = sum(revenue.values())
        share = {
            shop: (revenue[shop] / total if total > 0 else 0.0) for shop in shops
        }
        sales.append(
            DailySales(
                day=day,
                revenue=revenue,
                transactions=transactions,
                share=share,
                total=total,
            )
        )
    return sales


def market_share_frame(sales: List[DailySales]) -> pandas.DataFrame:
    """
    Long form of daily sales: one row per day and shop, money as dollar strings.
    """
    rows = [
        {
            "day": entry.day,
            "shop": shop,
            "revenue": format_cents(entry.revenue[shop]),
            "transactions": entry.transactions[shop],
            "share": entry.share[shop],
            "market_total": format_cents(entry.total),
        }
        for entry in sales
        for shop in sorted(entry.revenue)
    ]
    return pandas.DataFrame(rows, columns=MARKET_SHARE_COLUMNS)


def read_market_share(path: Union[str, Path]) -> List[DailySales]:
    """
    Read a market share report written by `write_reports` back into daily sales.

    Raises
    ------
    ReportMismatchException
        If the file is missing or lacks a column.
    """
    path = Path(path)
    if not path.exists():
        raise ReportMismatchException(f"Missing report {path}")
    frame = pandas.read_csv(path, dtype={"revenue": str, "market_total": str})
    missing = [c for c in MARKET_SHARE_COLUMNS if c not in frame.columns]
    if missing:
        raise ReportMismatchException(f"{path} lacks columns {', '.join(missing)}")

    sales = []
    days = sorted(int(d) for d in frame["day"].unique())
    for day in range(1, (days[-1] if days else 0) + 1):
        rows = frame[frame["day"] == day]
        entry = DailySales(day=day)
        for row in rows.itertuples(index=False):
            entry.revenue[row.shop] = parse_cents(row.revenue)
            entry.transactions[row.shop] = int(row.transactions)
            entry.share[row.shop] = float(row.share)
        entry.total = sum(entry.revenue.values())
        sales.append(entry)
    return sales
