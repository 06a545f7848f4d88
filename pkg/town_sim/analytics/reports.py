from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas

from town_sim.analytics.loyalty import ChoiceMatrix, loyalty_matrix
from town_sim.analytics.sales import (
    DailySales,
    daily_sales,
    market_share_frame,
    purchases_frame,
    read_market_share,
)
from town_sim.analytics.substitution import SubstitutionReport
from town_sim.economy.pricing import format_cents
from town_sim.engine.event_log import Event, EventKind, EventLog
from town_sim.exception import ReportMismatchException
from town_sim.world.loader import Scenario
from town_sim.world.scenario import Persona, ShopKind

logger = logging.getLogger(__name__)

DAILY_SALES_CSV = "daily_sales.csv"
MARKET_SHARE_CSV = "market_share.csv"
CHOICE_MATRIX_CSV = "choice_matrix.csv"
SUMMARY_JSON = "summary.json"
SUBSTITUTION_CSV = "substitution_report.csv"
SUBSTITUTION_JSON = "substitution_report.json"

FLOAT_FORMAT = "%.10f"
DEAL_PRONE = 0.7
DEAL_AVERSE = 0.3


def _write_csv(frame: pandas.DataFrame, path: Path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_json(document: Dict[str, Any], path: Path):
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False))
        f.write("\n")


def discount_schedule(scenario: Scenario) -> List[Dict[str, Any]]:
    """
    Every promotion of the scenario, ordered by shop and start day.
    """
    windows = [
        {
            "shop": shop.location_name,
            "shop_kind": shop.kind.value,
            "start_day": window.start_day,
            "end_day": window.end_day,
            "rate": window.rate,
            "applies_to": window.applies_to,
        }
        for shop in scenario.town_map.shops.values()
        for window in shop.discount_schedule
    ]
    return sorted(windows, key=lambda w: (w["shop"], w["start_day"], w["end_day"]))


def promoted_dining_shop(
    schedule: Sequence[Dict[str, Any]], days: int
) -> Tuple[Optional[str], List[int]]:
    """
    The first promoted dining shop of a schedule and the days of its promotions
    inside the run.
    """
    dining = [
        w
        for w in schedule
        if w.get("shop_kind", ShopKind.DINING.value) == ShopKind.DINING.value
    ]
    if not dining:
        return None, []
    shop = dining[0]["shop"]
    promo_days = sorted(
        {
            day
            for w in dining
            if w["shop"] == shop
            for day in range(w["start_day"], w["end_day"] + 1)
            if day <= days
        }
    )
    return shop, promo_days


def switching_by_deal_proneness(
    matrix: ChoiceMatrix,
    personas: Iterable[Persona],
    shop: Optional[str],
    promo_days: Sequence[int],
) -> Optional[Dict[str, Any]]:
    """
    How often deal-prone and deal-averse agents visit the promoted shop on promotion
    days.

    The rate of an agent is the fraction of promotion days with a visit to the shop.
    Agents with a deal proneness of at least 0.7 are deal-prone, those of at most
    0.3 deal-averse.

    Returns
    -------
    Dict[str, Any] | None
        Mean rate per group and the rate of every agent, or None without a
        promotion.
    """
    if shop is None or not promo_days:
        return None

    rates = {}
    prone = []
    averse = []
    for persona in sorted(personas, key=lambda p: p.name):
        visits = sum(1 for day in promo_days if shop in matrix.shops_on(persona.name, day))
        rate = visits / len(promo_days)
        rates[persona.name] = rate
        if persona.deal_proneness >= DEAL_PRONE:
            prone.append(rate)
        elif persona.deal_proneness <= DEAL_AVERSE:
            averse.append(rate)

    return {
        "shop": shop,
        "days": list(promo_days),
        "deal_prone": sum(prone) / len(prone) if prone else None,
        "deal_averse": sum(averse) / len(averse) if averse else None,
        "agents": rates,
    }


def _count(events: List[Event], kind: EventKind) -> int:
    return sum(1 for e in events if e.kind == kind.value)


def summarize(
    log: Union[EventLog, Iterable[Event]], scenario: Optional[Scenario] = None
) -> Dict[str, Any]:
    """
    Totals and run statistics of an event log.

    Parameters
    ----------
    log : EventLog
        The event log.
    scenario : Scenario, optional
        The scenario of the run. Adds the discount schedule and the switching rates
        by deal proneness.

    Returns
    -------
    Dict[str, Any]
        The summary document.
    """
    events = list(log)
    purchases = purchases_frame(events)
    sales = daily_sales(events)
    matrix = loyalty_matrix(events)
    days = len(sales)

    by_shop = purchases.groupby("shop")["final_price"].sum()
    dining_total = sum(s.total for s in sales)

    max_streaks: Dict[str, Dict[str, int]] = {}
    for (agent, shop), streak in matrix.streaks().items():
        max_streaks.setdefault(agent, {})[shop] = streak

    created = _count(events, EventKind.COMMITMENT_CREATED)
    fulfilled = _count(events, EventKind.COMMITMENT_FULFILLED)
    broken = _count(events, EventKind.COMMITMENT_BROKEN)
    skipped = Counter(
        str(e.payload.get("reason"))
        for e in events
        if e.kind == EventKind.SOCIAL_CHECK_SKIPPED.value
    )

    summary = {
        "days": days,
        "events": len(events),
        "purchases": int(len(purchases)),
        "revenue_total": format_cents(int(purchases["final_price"].sum())),
        "revenue_by_shop": {
            shop: format_cents(int(total)) for shop, total in sorted(by_shop.items())
        },
        "dining_market_total": format_cents(dining_total),
        "max_streaks": max_streaks,
        "commitments": {
            "created": created,
            "fulfilled": fulfilled,
            "broken": broken,
            "rescheduled": _count(events, EventKind.COMMITMENT_RESCHEDULED),
            "pending": created - fulfilled - broken,
        },
        "conversations": _count(events, EventKind.CONVERSATION),
        "social_check_skipped": dict(sorted(skipped.items())),
        "meals_skipped": _count(events, EventKind.MEAL_SKIPPED),
        "emergencies": _count(events, EventKind.EMERGENCY_REPLAN),
        "collapses": _count(events, EventKind.COLLAPSE_TELEPORT),
        "discount_schedule": [],
        "switching_by_deal_proneness": None,
    }
    if scenario is not None:
        schedule = discount_schedule(scenario)
        shop, promo_days = promoted_dining_shop(schedule, days)
        summary["discount_schedule"] = schedule
        summary["substitution_tolerance"] = scenario.sim.substitution_tolerance
        summary["switching_by_deal_proneness"] = switching_by_deal_proneness(
            matrix, scenario.personas, shop, promo_days
        )
    return summary


def write_reports(
    log: Union[EventLog, Iterable[Event]],
    out_dir: Union[str, Path],
    scenario: Optional[Scenario] = None,
) -> Dict[str, Path]:
    """
    Write the analytics reports of a log.

    `daily_sales.csv` covers every shop, `market_share.csv` the dining market,
    `choice_matrix.csv` the dining visits of every agent, and `summary.json` the
    totals and statistics. The files only depend on the log and the scenario.

    Returns
    -------
    Dict[str, Path]
        Written files by name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events = list(log)

    paths = {
        name: out_dir / name
        for name in (DAILY_SALES_CSV, MARKET_SHARE_CSV, CHOICE_MATRIX_CSV, SUMMARY_JSON)
    }
    all_shops = market_share_frame(daily_sales(events, shop_kind=None))
    _write_csv(all_shops.drop(columns=["share"]), paths[DAILY_SALES_CSV])
    _write_csv(market_share_frame(daily_sales(events)), paths[MARKET_SHARE_CSV])
    _write_csv(loyalty_matrix(events).to_frame(), paths[CHOICE_MATRIX_CSV])
    _write_json(summarize(events, scenario), paths[SUMMARY_JSON])
    logger.info("Reports written to %s", out_dir)
    return paths


def read_reports(run_dir: Union[str, Path]) -> Tuple[List[DailySales], Dict[str, Any]]:
    """
    Read the dining market sales and the summary of a report directory.

    Raises
    ------
    ReportMismatchException
        If a report is missing.
    """
    run_dir = Path(run_dir)
    sales = read_market_share(run_dir / MARKET_SHARE_CSV)
    summary_path = run_dir / SUMMARY_JSON
    if not summary_path.exists():
        raise ReportMismatchException(f"Missing report {summary_path}")
    with summary_path.open("r", encoding="utf-8") as f:
        summary = json.load(f)
    # days without any dining purchase leave no rows in the market share report
    days = int(summary.get("days", len(sales)))
    sales.extend(DailySales(day=day) for day in range(len(sales) + 1, days + 1))
    return sales, summary


def write_comparison(report: SubstitutionReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / name for name in (SUBSTITUTION_CSV, SUBSTITUTION_JSON)}
    _write_csv(report.to_frame(), paths[SUBSTITUTION_CSV])
    _write_json(report.to_dict(), paths[SUBSTITUTION_JSON])
    return paths
