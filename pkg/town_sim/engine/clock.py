from __future__ import annotations

from dataclasses import dataclass

from town_sim.parameters import Parameters


@dataclass
class SimClock:
    """
    Simulation time. One tick is one hour by default; the tick wraps to 0 when the
    day advances.

    Attributes
    ----------
    day : int
        1-based day index.
    tick : int
        Tick of day in [0, ticks_per_day).
    ticks_per_day : int
        Length of a day.
    """

    day: int = 1
    tick: int = 0
    ticks_per_day: int = Parameters.TICKS_PER_DAY

    def __post_init__(self):
        if self.ticks_per_day <= 0:
            raise ValueError("ticks_per_day must be positive")
        if self.day < 1 or not 0 <= self.tick < self.ticks_per_day:
            raise ValueError(f"Invalid clock position day={self.day} tick={self.tick}")

    @property
    def absolute(self) -> int:
        return (self.day - 1) * self.ticks_per_day + self.tick

    def advance(self) -> SimClock:
        self.tick += 1
        if self.tick == self.ticks_per_day:
            self.tick = 0
            self.day += 1
        return self

    def __str__(self) -> str:
        return f"day={self.day} tick={self.tick}"
