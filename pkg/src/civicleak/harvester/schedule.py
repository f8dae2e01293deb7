"""Date-of-birth search orders for the full-date social security lookup.

A record with a known birth year must be probed date by date. The reversed
(date-major) schedule asks each date for every still-open record before
moving on; per-person sequential search finishes one record before starting
the next. Under the same date order both spend exactly ``sum(rank(dob))``
queries; the date-major form merely spreads each identity's probes apart.
"""

from __future__ import annotations

import calendar
import datetime as dt
import enum
import random
from collections.abc import Callable, Hashable, Iterator, Sequence
from dataclasses import dataclass
from functools import lru_cache


class DobStrategy(enum.Enum):
    CALENDAR_REVERSED = "calendar-reversed"
    PER_PERSON_SEQUENTIAL = "per-person-sequential"
    FREQUENCY_ORDERED = "frequency-ordered"
    RANDOM_ORDER = "random-order"

    @classmethod
    def parse(cls, value: str | DobStrategy) -> DobStrategy:
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown DOB strategy {value!r}; expected one of "
                             f"{[s.value for s in cls]}") from None


@dataclass(frozen=True)
class DobRecord:
    key: Hashable
    year: int


@lru_cache(maxsize=512)
def calendar_dates(year: int) -> tuple[dt.date, ...]:
    """Every valid date of ``year`` (365 or 366)."""
    start = dt.date(year, 1, 1)
    n = 366 if calendar.isleap(year) else 365
    return tuple(start + dt.timedelta(days=i) for i in range(n))


def day_weights(year: int, month_weights: Sequence[float] | None) -> list[float]:
    """Per-date probability mass implied by per-month weights (uniform within a month)."""
    dates = calendar_dates(year)
    if month_weights is None:
        return [1.0] * len(dates)
    return [month_weights[d.month - 1] / calendar.monthrange(year, d.month)[1] for d in dates]


class DateOrder:
    """Per-year date order shared by all records of a strategy run."""

    def __init__(self, strategy: DobStrategy, month_weights: Sequence[float] | None = None, seed: int = 0):
        self.strategy = strategy
        self.month_weights = tuple(month_weights) if month_weights is not None else None
        self.seed = seed
        self._cache: dict[int, tuple[dt.date, ...]] = {}

    def __call__(self, year: int) -> tuple[dt.date, ...]:
        order = self._cache.get(year)
        if order is None:
            dates = calendar_dates(year)
            if self.strategy is DobStrategy.FREQUENCY_ORDERED:
                w = day_weights(year, self.month_weights)
                # stable sort keeps calendar order among equal weights
                order = tuple(dates[i] for i in sorted(range(len(dates)), key=lambda i: -w[i]))
            elif self.strategy is DobStrategy.RANDOM_ORDER:
                shuffled = list(dates)
                random.Random(f"dob-order/{self.seed}/{year}").shuffle(shuffled)
                order = tuple(shuffled)
            else:
                order = dates
            self._cache[year] = order
        return order

    def rank(self, dob: dt.date) -> int:
        """1-based position of ``dob`` within its year's order."""
        return self(dob.year).index(dob) + 1


def schedule_dob(records: Sequence[DobRecord], strategy: DobStrategy | str,
                 dob_weights: Sequence[float] | None = None, *,
                 resolved: Callable[[Hashable], bool] = lambda key: False,
                 seed: int = 0) -> Iterator[tuple[DobRecord, dt.date]]:
    """Lazily yield ``(record, candidate date)`` probes.

    ``resolved`` is consulted before every probe, so hits observed by the
    caller between draws remove records from the schedule.
    """
    strategy = DobStrategy.parse(strategy)
    order = DateOrder(strategy, dob_weights, seed)
    if strategy is DobStrategy.PER_PERSON_SEQUENTIAL:
        for rec in records:
            for d in order(rec.year):
                if resolved(rec.key):
                    break
                yield rec, d
        return
    active = list(records)
    k = 0
    last = None
    while active:
        live = [r for r in active if not resolved(r.key) and k < len(order(r.year))]
        if len(live) > 1 and live[0].key == last:
            live = live[1:] + live[:1]  # never open a round with the identity that closed the previous one
        nxt = []
        for rec in live:
            if resolved(rec.key):
                continue
            yield rec, order(rec.year)[k]
            last = rec.key
            nxt.append(rec)
        active = nxt
        k += 1


def expected_total(records_with_dob: Sequence[tuple[DobRecord, dt.date | None]], strategy: DobStrategy | str,
                   dob_weights: Sequence[float] | None = None, seed: int = 0) -> int:
    """Closed-form query count: rank of the true date, or the whole year when absent."""
    order = DateOrder(DobStrategy.parse(strategy), dob_weights, seed)
    total = 0
    for rec, dob in records_with_dob:
        dates = order(rec.year)
        total += order.rank(dob) if dob is not None and dob.year == rec.year else len(dates)
    return total


def simulate(records_with_dob: Sequence[tuple[DobRecord, dt.date | None]], strategy: DobStrategy | str,
             dob_weights: Sequence[float] | None = None, seed: int = 0) -> list[tuple[Hashable, dt.date]]:
    """Replay a schedule against known truth; returns the probe sequence."""
    truth = {rec.key: dob for rec, dob in records_with_dob}
    done: set[Hashable] = set()
    probes = []
    for rec, d in schedule_dob([r for r, _ in records_with_dob], strategy, dob_weights,
                               resolved=done.__contains__, seed=seed):
        probes.append((rec.key, d))
        if truth[rec.key] == d:
            done.add(rec.key)
    return probes
