from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import pandas

from town_sim.analytics.sales import DINING, last_day, purchases_frame
from town_sim.engine.event_log import Event, EventLog

CHOICE_MATRIX_COLUMNS = ["agent", "day", "shop", "visits", "visited"]


@dataclass
class ChoiceMatrix:
    """
    Which shops every agent visited on every day.

    Attributes
    ----------
    agents : List[str]
        Agents with at least one visit, sorted.
    days : int
        Number of days covered.
    visits : Dict[Tuple[str, int], Dict[str, int]]
        Visit counts per shop, keyed by (agent, day).
    """

    agents: List[str] = field(default_factory=list)
    days: int = 0
    visits: Dict[Tuple[str, int], Dict[str, int]] = field(default_factory=dict)

    def shops_on(self, agent: str, day: int) -> Set[str]:
        return set(self.visits.get((agent, day), {}))

    def runs(self, agent: str, shop: str) -> List[Tuple[int, int]]:
        """
        Maximal runs of consecutive days with a visit to the shop, as inclusive
        (first day, last day) pairs.
        """
        runs = []
        start = None
        for day in range(1, self.days + 2):
            visited = day <= self.days and shop in self.shops_on(agent, day)
            if visited and start is None:
                start = day
            elif not visited and start is not None:
                runs.append((start, day - 1))
                start = None
        return runs

    def streak(self, agent: str, shop: str) -> int:
        return max((end - start + 1 for start, end in self.runs(agent, shop)), default=0)

    def streaks(self) -> Dict[Tuple[str, str], int]:
        """
        Longest streak of every (agent, shop) pair with a visit.
        """
        pairs = sorted(
            {(agent, shop) for (agent, _), shops in self.visits.items() for shop in shops}
        )
        return {pair: self.streak(*pair) for pair in pairs}

    def to_frame(self) -> pandas.DataFrame:
        """
        Long form with both the visit count and the binary visit flag.
        """
        rows = [
            {
                "agent": agent,
                "day": day,
                "shop": shop,
                "visits": count,
                "visited": 1,
            }
            for (agent, day), shops in sorted(self.visits.items())
            for shop, count in sorted(shops.items())
        ]
        return pandas.DataFrame(rows, columns=CHOICE_MATRIX_COLUMNS)


def loyalty_matrix(
    log: Union[EventLog, Iterable[Event]], shop_kind: Optional[str] = DINING
) -> ChoiceMatrix:
    """
    Build the shop choice matrix from the purchases of a log.

    Parameters
    ----------
    log : EventLog
        The event log.
    shop_kind : str, optional
        Shops to include, by default dining shops. None includes every shop.

    Returns
    -------
    ChoiceMatrix
        The matrix over every day of the log.
    """
    events = list(log)
    purchases = purchases_frame(events)
    if shop_kind is not None:
        purchases = purchases[purchases["shop_kind"] == shop_kind]

    matrix = ChoiceMatrix(days=last_day(events))
    counts = purchases.groupby(["agent", "day", "shop"]).size()
    for (agent, day, shop), count in counts.items():
        matrix.visits.setdefault((agent, int(day)), {})[shop] = int(count)
    matrix.agents = sorted({agent for agent, _ in matrix.visits})
    return matrix
