"""Infinite-server state reconstruction from marked arrival points.

A customer is the pair (arrival time A_n < 0, service requirement V_n); it
occupies the system on [A_n, A_n + V_n).  Counting follows the
right-continuous convention: an arrival at t is present at t, a departure
at t is not.  All queries are only valid on the certified window, where the
simulated prefix provably contains every customer that can matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UncertifiedTime


@dataclass(frozen=True)
class MarkedPoint:
    index: int
    arrival: float      # negative
    service: float

    @property
    def departure(self) -> float:
        return self.arrival + self.service


@dataclass
class SystemState:
    """Markov descriptor: elapsed age plus sorted remaining service times."""

    elapsed_age: float
    remaining: np.ndarray    # ascending

    @property
    def occupancy(self) -> int:
        return len(self.remaining)

    def queue_above(self, y: float) -> int:
        """Number of customers with remaining service time strictly above y."""
        return int(len(self.remaining) - np.searchsorted(self.remaining, y, side="right"))

    def max_remaining(self) -> float:
        return float(self.remaining[-1]) if len(self.remaining) else 0.0

    def to_record(self) -> dict:
        return {"occupancy": self.occupancy,
                "age": self.elapsed_age,
                "remaining": [float(r) for r in self.remaining]}


def state_at(arrivals: np.ndarray, services: np.ndarray, t: float,
             certified_from: float) -> SystemState:
    """State W(t) = (elapsed age, remaining times) at a certified time t <= 0."""
    if t < certified_from:
        raise UncertifiedTime(f"t={t} below certified window start {certified_from}")
    arrivals = np.asarray(arrivals, dtype=float)
    departures = arrivals + np.asarray(services, dtype=float)
    active = (arrivals <= t) & (departures > t)
    remaining = np.sort(departures[active] - t)
    past = arrivals[arrivals <= t]
    if past.size == 0:
        raise UncertifiedTime(f"no simulated arrival at or before t={t}")
    return SystemState(elapsed_age=float(t - past.max()), remaining=remaining)


class EventTimeline:
    """Piecewise-constant occupancy of the infinite-server system on a window.

    Exposes occupancy and max-remaining queries at arbitrary certified
    times, the departure epochs inside the window (the coalescence
    candidates), and the running maximum of occupancy over subintervals.
    """

    def __init__(self, arrivals: np.ndarray, services: np.ndarray,
                 t_lo: float, certified_from: float | None = None):
        self.arrivals = np.asarray(arrivals, dtype=float)
        self.services = np.asarray(services, dtype=float)
        self.departures = self.arrivals + self.services
        self.t_lo = float(t_lo)
        self.certified_from = self.t_lo if certified_from is None else certified_from
        if self.t_lo < self.certified_from:
            raise UncertifiedTime("timeline window exceeds the certified range")
        in_win = (self.departures >= t_lo) & (self.departures < 0.0)
        self.departure_epochs = np.sort(self.departures[in_win])
        # merged event list over the window for occupancy stepping;
        # departures sort before arrivals at ties (right-continuity)
        arr_t = self.arrivals[(self.arrivals >= t_lo) & (self.arrivals <= 0.0)]
        times = np.concatenate([self.departure_epochs, arr_t])
        deltas = np.concatenate([np.full(len(self.departure_epochs), -1),
                                 np.ones(len(arr_t))])
        order = np.lexsort((deltas, times))
        self._ev_times = times[order]
        self._ev_deltas = deltas[order]

    def occupancy_at(self, t: float) -> int:
        return int(np.count_nonzero((self.arrivals <= t) & (self.departures > t)))

    def max_remaining_at(self, t: float) -> float:
        active = (self.arrivals <= t) & (self.departures > t)
        if not active.any():
            return 0.0
        return float(self.departures[active].max() - t)

    def sup_occupancy(self, t1: float, t2: float) -> int:
        """Supremum of occupancy over the closed interval [t1, t2]."""
        base = self.occupancy_at(t1)
        lo = np.searchsorted(self._ev_times, t1, side="right")
        hi = np.searchsorted(self._ev_times, t2, side="right")
        if hi <= lo:
            return base
        steps = np.cumsum(self._ev_deltas[lo:hi])
        return int(base + max(0, steps.max()))

    def occupancy_series(self):
        """(times, occupancy right after each event) across the window."""
        base = self.occupancy_at(self.t_lo)
        mask = self._ev_times > self.t_lo
        vals = base + np.cumsum(self._ev_deltas[mask])
        return self._ev_times[mask], vals


def monotone_under_removal(arrivals, services, drop_index: int, t: float) -> bool:
    """Occupancy never increases when one point is removed (for tests)."""
    a = np.asarray(arrivals, dtype=float)
    s = np.asarray(services, dtype=float)
    full = np.count_nonzero((a <= t) & (a + s > t))
    keep = np.ones(len(a), dtype=bool)
    keep[drop_index] = False
    less = np.count_nonzero((a[keep] <= t) & (a[keep] + s[keep] > t))
    return less <= full
