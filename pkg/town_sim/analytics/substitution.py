from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import pandas

from town_sim.analytics.sales import DailySales
from town_sim.economy.pricing import format_cents
from town_sim.exception import ReportMismatchException
from town_sim.parameters import Parameters

SHARE_DELTA_COLUMNS = [
    "day",
    "shop",
    "baseline_share",
    "treated_share",
    "share_delta",
    "baseline_total",
    "treated_total",
    "total_change",
]


def relative_change(baseline: int, treated: int) -> Optional[float]:
    """
    (treated - baseline) / baseline, or None when the baseline is empty and the
    treated value is not.
    """
    if baseline == 0:
        return 0.0 if treated == 0 else None
    return (treated - baseline) / baseline


@dataclass
class SubstitutionReport:
    """
    Comparison of a promotion run with its baseline.

    Attributes
    ----------
    share_delta : Dict[int, Dict[str, float]]
        Treated minus baseline market share, per day and shop.
    total_change_by_day : Dict[int, Optional[float]]
        Relative change of the market size per day.
    total_change : Optional[float]
        Relative change of the market size over the discount days, or over the
        whole run when no discount days are known.
    discounted_shop : str, optional
        The shop that ran the promotion.
    discount_days : List[int]
        Days of the promotion.
    tolerance : float
        Largest market size change still counted as substitution.
    substitution_dominant : bool
        The market size stayed within the tolerance while the discounted shop gained
        share on every discount day.
    """

    share_delta: Dict[int, Dict[str, float]]
    total_change_by_day: Dict[int, Optional[float]]
    total_change: Optional[float]
    baseline: List[DailySales] = field(repr=False, default_factory=list)
    treated: List[DailySales] = field(repr=False, default_factory=list)
    discounted_shop: Optional[str] = None
    discount_days: List[int] = field(default_factory=list)
    tolerance: float = Parameters.SUBSTITUTION_TOLERANCE
    substitution_dominant: bool = False

    def to_frame(self) -> pandas.DataFrame:
        rows = []
        for base, treat in zip(self.baseline, self.treated):
            for shop in sorted(self.share_delta[base.day]):
                rows.append(
                    {
                        "day": base.day,
                        "shop": shop,
                        "baseline_share": base.share.get(shop, 0.0),
                        "treated_share": treat.share.get(shop, 0.0),
                        "share_delta": self.share_delta[base.day][shop],
                        "baseline_total": format_cents(base.total),
                        "treated_total": format_cents(treat.total),
                        "total_change": self.total_change_by_day[base.day],
                    }
                )
        return pandas.DataFrame(rows, columns=SHARE_DELTA_COLUMNS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "days": len(self.baseline),
            "discounted_shop": self.discounted_shop,
            "discount_days": list(self.discount_days),
            "tolerance": self.tolerance,
            "total_change": self.total_change,
            "total_change_by_day": {
                str(day): change for day, change in sorted(self.total_change_by_day.items())
            },
            "share_delta": {
                str(day): dict(sorted(deltas.items()))
                for day, deltas in sorted(self.share_delta.items())
            },
            "substitution_dominant": self.substitution_dominant,
        }


def substitution_report(
    baseline: List[DailySales],
    treated: List[DailySales],
    tolerance: float = Parameters.SUBSTITUTION_TOLERANCE,
    discounted_shop: Optional[str] = None,
    discount_days: Optional[Sequence[int]] = None,
) -> SubstitutionReport:
    """
    Compare the daily sales of a promotion run with those of its baseline.

    Parameters
    ----------
    baseline : List[DailySales]
        Daily sales without the promotion.
    treated : List[DailySales]
        Daily sales of the same scenario and seed with the promotion.
    tolerance : float, optional
        Largest relative market size change still counted as substitution.
    discounted_shop : str, optional
        The promoted shop. Without it the run is never flagged.
    discount_days : Sequence[int], optional
        Days of the promotion. The market size change is measured over them when
        given.

    Returns
    -------
    SubstitutionReport
        Share deltas, market size changes and the substitution flag.

    Raises
    ------
    ReportMismatchException
        If the runs cover a different number of days.
    """
    if len(baseline) != len(treated):
        raise ReportMismatchException(
            f"Baseline covers {len(baseline)} days but treated covers {len(treated)}"
        )
    for base, treat in zip(baseline, treated):
        if base.day != treat.day:
            raise ReportMismatchException(
                f"Day {base.day} of the baseline lines up with day {treat.day}"
            )

    share_delta = {}
    total_change_by_day = {}
    for base, treat in zip(baseline, treated):
        shops = sorted(set(base.share) | set(treat.share))
        share_delta[base.day] = {
            shop: treat.share.get(shop, 0.0) - base.share.get(shop, 0.0) for shop in shops
        }
        total_change_by_day[base.day] = relative_change(base.total, treat.total)

    days = sorted(set(discount_days or [])) or [s.day for s in baseline]
    window = set(days)
    total_change = relative_change(
        sum(s.total for s in baseline if s.day in window),
        sum(s.total for s in treated if s.day in window),
    )

    dominant = False
    if discounted_shop is not None and discount_days and total_change is not None:
        gains = [
            share_delta.get(day, {}).get(discounted_shop, 0.0) > 0
            for day in sorted(set(discount_days))
        ]
        dominant = abs(total_change) < tolerance and all(gains)

    return SubstitutionReport(
        share_delta=share_delta,
        total_change_by_day=total_change_by_day,
        total_change=total_change,
        baseline=list(baseline),
        treated=list(treated),
        discounted_shop=discounted_shop,
        discount_days=sorted(set(discount_days or [])),
        tolerance=tolerance,
        substitution_dominant=dominant,
    )
