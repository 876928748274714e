"""No-look-ahead instrumentation for rolling fits.

Every model fit reports the latest week its inputs actually touched, split
by source: surveillance %ILI must stay strictly before the estimation week
(reports arrive with a one-week lag), while search volumes may include the
estimation week itself (they are available in real time).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

from .weeks import EpiWeek


class LookaheadViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class AuditRecord:
    fit_week: EpiWeek
    task: str
    max_ili_week: Optional[EpiWeek]
    max_search_week: Optional[EpiWeek]


@dataclass
class LookaheadAudit:
    records: List[AuditRecord] = field(default_factory=list)

    def record(
        self,
        fit_week: EpiWeek,
        task: str,
        max_ili_week: Optional[EpiWeek] = None,
        max_search_week: Optional[EpiWeek] = None,
    ) -> None:
        self.records.append(AuditRecord(fit_week, task, max_ili_week, max_search_week))

    def verify(self) -> int:
        """Raise on any violation; return the number of records checked."""
        for rec in self.records:
            if rec.max_ili_week is not None and not rec.max_ili_week < rec.fit_week:
                raise LookaheadViolation(
                    f"{rec.task} at {rec.fit_week} touched %ILI week {rec.max_ili_week}"
                )
            if rec.max_search_week is not None and rec.max_search_week > rec.fit_week:
                raise LookaheadViolation(
                    f"{rec.task} at {rec.fit_week} touched search week {rec.max_search_week}"
                )
        return len(self.records)
