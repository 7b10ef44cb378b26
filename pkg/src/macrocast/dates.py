"""Quarterly and monthly period indices for the macro panel."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import total_ordering

__all__ = ["QuarterDate", "MonthDate", "parse_date"]

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")
_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


@total_ordering
@dataclass(frozen=True)
class QuarterDate:
    """A calendar quarter, ordered like the calendar; ``(y, 4).next() == (y+1, 1)``."""

    year: int
    quarter: int

    def __post_init__(self) -> None:
        if not 1 <= self.quarter <= 4:
            raise ValueError(f"quarter must be in 1..4, got {self.quarter}")

    @property
    def index(self) -> int:
        return self.year * 4 + (self.quarter - 1)

    def __lt__(self, other: "QuarterDate") -> bool:
        return self.index < other.index

    def advance(self, quarters: int) -> "QuarterDate":
        idx = self.index + quarters
        return QuarterDate(idx // 4, idx % 4 + 1)

    def next(self) -> "QuarterDate":
        return self.advance(1)

    def __sub__(self, other: "QuarterDate") -> int:
        return self.index - other.index

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"

    @classmethod
    def parse(cls, text: str) -> "QuarterDate":
        m = _QUARTER_RE.match(text.strip())
        if m is None:
            raise ValueError(f"not a quarter date (expected YYYYQn): {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def range(cls, start: "QuarterDate", end: "QuarterDate") -> list["QuarterDate"]:
        """Inclusive range."""
        if end < start:
            raise ValueError(f"empty quarter range {start}..{end}")
        return [start.advance(k) for k in range(end - start + 1)]


@total_ordering
@dataclass(frozen=True)
class MonthDate:
    """A calendar month, used only for raw monthly observations."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must be in 1..12, got {self.month}")

    @property
    def index(self) -> int:
        return self.year * 12 + (self.month - 1)

    def __lt__(self, other: "MonthDate") -> bool:
        return self.index < other.index

    def advance(self, months: int) -> "MonthDate":
        idx = self.index + months
        return MonthDate(idx // 12, idx % 12 + 1)

    def __sub__(self, other: "MonthDate") -> int:
        return self.index - other.index

    @property
    def quarter(self) -> QuarterDate:
        return QuarterDate(self.year, (self.month - 1) // 3 + 1)

    def __str__(self) -> str:
        return f"{self.year}-{self.month:02d}"

    @classmethod
    def parse(cls, text: str) -> "MonthDate":
        m = _MONTH_RE.match(text.strip())
        if m is None:
            raise ValueError(f"not a month date (expected YYYY-MM): {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


def parse_date(text: str) -> QuarterDate | MonthDate:
    """Parse either ``YYYYQn`` or ``YYYY-MM``."""
    t = text.strip()
    if _QUARTER_RE.match(t):
        return QuarterDate.parse(t)
    if _MONTH_RE.match(t):
        return MonthDate.parse(t)
    raise ValueError(f"unparseable date {text!r} (expected YYYYQn or YYYY-MM)")
