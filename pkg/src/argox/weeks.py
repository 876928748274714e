"""Epidemiological (MMWR) week calendar and flu-season slicing.

Weeks are identified by ``(year, week)`` integer pairs everywhere, never by
calendar dates, so files written by one tool cannot be misread by another
that assumes ISO week numbering. The successor function knows which years
have 53 weeks.
"""

from __future__ import annotations

import datetime as _dt
import functools
from typing import Iterable, List, NamedTuple, Sequence, Tuple


@functools.lru_cache(maxsize=None)
def _week1_start(year: int) -> _dt.date:
    # MMWR week 1 ends on the first Saturday of January that is >= Jan 4.
    jan4 = _dt.date(year, 1, 4)
    saturday = jan4 + _dt.timedelta(days=(5 - jan4.weekday()) % 7)
    return saturday - _dt.timedelta(days=6)


@functools.lru_cache(maxsize=None)
def weeks_in_year(year: int) -> int:
    """Number of MMWR weeks (52 or 53) in the given epidemiological year."""
    return (_week1_start(year + 1) - _week1_start(year)).days // 7


class EpiWeek(NamedTuple):
    """One MMWR epidemiological week. Ordered like (year, week) tuples."""

    year: int
    week: int

    def validate(self) -> "EpiWeek":
        if not 1 <= self.week <= weeks_in_year(self.year):
            raise ValueError(
                f"week {self.week} out of range for year {self.year} "
                f"(has {weeks_in_year(self.year)} weeks)"
            )
        return self

    def next(self) -> "EpiWeek":
        if self.week < weeks_in_year(self.year):
            return EpiWeek(self.year, self.week + 1)
        return EpiWeek(self.year + 1, 1)

    def prev(self) -> "EpiWeek":
        if self.week > 1:
            return EpiWeek(self.year, self.week - 1)
        return EpiWeek(self.year - 1, weeks_in_year(self.year - 1))

    def add(self, n: int) -> "EpiWeek":
        w = self
        step = EpiWeek.next if n >= 0 else EpiWeek.prev
        for _ in range(abs(n)):
            w = step(w)
        return w

    def __str__(self) -> str:
        return f"{self.year}w{self.week:02d}"


def parse_week(token: str | Sequence[int] | EpiWeek) -> EpiWeek:
    """Parse ``"2014w41"`` strings or ``[2014, 41]`` pairs into an EpiWeek."""
    if isinstance(token, EpiWeek):
        return token.validate()
    if isinstance(token, str):
        lo = token.lower()
        if "w" not in lo:
            raise ValueError(f"cannot parse week token {token!r} (expected YYYYwWW)")
        y, w = lo.split("w", 1)
        return EpiWeek(int(y), int(w)).validate()
    y, w = token
    return EpiWeek(int(y), int(w)).validate()


def week_range(start: EpiWeek, end: EpiWeek) -> List[EpiWeek]:
    """Inclusive list of consecutive weeks from start through end."""
    start = start.validate()
    end = end.validate()
    if end < start:
        raise ValueError(f"week range end {end} before start {start}")
    out = [start]
    while out[-1] < end:
        out.append(out[-1].next())
    return out


def weeks_between(a: EpiWeek, b: EpiWeek) -> int:
    """Signed number of weeks from a to b (b - a)."""
    days = (_week1_start(b.year) + _dt.timedelta(weeks=b.week - 1)) - (
        _week1_start(a.year) + _dt.timedelta(weeks=a.week - 1)
    )
    return days.days // 7


def season_slices(index: Iterable[EpiWeek]) -> List[Tuple[str, List[EpiWeek]]]:
    """Split a week index into flu seasons (week 40 through week 20 next year).

    Each slice is clipped to the weeks actually present in the index; weeks
    21..39 belong to no season. Labels follow the "14-15" convention.
    """
    weeks = sorted(set(index))
    if not weeks:
        return []
    slices: dict[int, List[EpiWeek]] = {}
    for w in weeks:
        if w.week >= 40:
            season_year = w.year
        elif w.week <= 20:
            season_year = w.year - 1
        else:
            continue
        slices.setdefault(season_year, []).append(w)
    out = []
    for season_year in sorted(slices):
        label = f"{season_year % 100:02d}-{(season_year + 1) % 100:02d}"
        out.append((label, slices[season_year]))
    return out
