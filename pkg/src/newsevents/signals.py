"""Entity, group and global relevance indices over calendar periods."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

GRANULARITIES = ("week", "month", "quarter")


@dataclass(frozen=True, order=True)
class Period:
    year: int
    number: int
    unit: str = "month"

    def __str__(self) -> str:
        if self.unit == "month":
            return f"{self.year:04d}-{self.number:02d}"
        if self.unit == "quarter":
            return f"{self.year:04d}-Q{self.number}"
        return f"{self.year:04d}-W{self.number:02d}"

    @property
    def first_day(self) -> dt.date:
        if self.unit == "month":
            return dt.date(self.year, self.number, 1)
        if self.unit == "quarter":
            return dt.date(self.year, 3 * self.number - 2, 1)
        return dt.date.fromisocalendar(self.year, self.number, 1)

    @property
    def last_day(self) -> dt.date:
        if self.unit == "week":
            return self.first_day + dt.timedelta(days=6)
        months = 1 if self.unit == "month" else 3
        m = self.first_day.month + months
        y = self.year + (m - 1) // 12
        return dt.date(y, (m - 1) % 12 + 1, 1) - dt.timedelta(days=1)

    @classmethod
    def parse(cls, text: str) -> "Period":
        y, rest = text.split("-", 1)
        if rest.startswith("Q"):
            return cls(int(y), int(rest[1:]), "quarter")
        if rest.startswith("W"):
            return cls(int(y), int(rest[1:]), "week")
        return cls(int(y), int(rest), "month")


def period_of(date: dt.date, granularity: str = "month") -> Period:
    if granularity == "month":
        return Period(date.year, date.month, "month")
    if granularity == "quarter":
        return Period(date.year, (date.month - 1) // 3 + 1, "quarter")
    if granularity == "week":
        iso = date.isocalendar()
        return Period(iso[0], iso[1], "week")
    raise ValueError(f"unknown period granularity {granularity!r}")


def entity_index(posteriors: Sequence[float]) -> float | None:
    """Mean posterior of one entity's sentences in one period; None for a gap."""
    if len(posteriors) == 0:
        return None
    return float(np.mean(posteriors))


def group_index(
    members: Sequence[tuple[float, int]],
    group_size: int,
    mode: str = "normalized",
) -> float | None:
    """Combine ``(entity index, sentence count)`` pairs of one group.

    ``literal`` sums index times count and divides by the number of
    entities in the group, so it can exceed 1; ``normalized`` divides by the
    total sentence count instead.
    """
    present = [(v, c) for v, c in members if c > 0]
    if not present:
        return None
    weighted = sum(v * c for v, c in present)
    if mode == "literal":
        return weighted / group_size
    if mode == "normalized":
        return weighted / sum(c for _, c in present)
    raise ValueError(f"unknown group index mode {mode!r}")


def global_index(posteriors: Sequence[float]) -> float | None:
    return entity_index(posteriors)


def percentile_steps(step: int) -> list[int]:
    return list(range(step, 99, step))


def percentile_band(scores: Sequence[float], step: int = 2) -> np.ndarray:
    """Linearly interpolated percentiles at ``step, 2*step, ...`` up to 98."""
    if len(scores) == 0:
        raise ValueError("percentiles of an empty period")
    return np.percentile(np.asarray(scores, dtype=np.float64), percentile_steps(step), method="linear")


@dataclass
class IndexPoint:
    value: float
    count: int
    percentiles: np.ndarray
    in_sample: bool


@dataclass
class IndexSeries:
    scope: str  # "entity", "group" or "global"
    scope_id: str
    points: dict[Period, IndexPoint] = field(default_factory=dict)

    def values(self) -> dict[Period, float]:
        return {p: pt.value for p, pt in sorted(self.points.items())}


@dataclass(frozen=True)
class Mention:
    """One (sentence, entity) occurrence with its posterior."""

    sentence_id: int
    entity_id: str
    date: dt.date
    score: float


def build_indices(
    mentions: Iterable[Mention],
    groups: Mapping[str, Sequence[str]],
    granularity: str = "month",
    step: int = 2,
    group_mode: str = "normalized",
    sample_span: tuple[dt.date, dt.date] | None = None,
) -> list[IndexSeries]:
    """Entity, group and global series from per-mention posteriors.

    ``groups`` maps group id to member entities. A sentence mentioning
    several entities counts once for each of them, but only once in a group
    or global aggregate it reaches through more than one entity. Periods
    overlapping ``sample_span`` are flagged in-sample.
    """
    by_entity: dict[tuple[str, Period], dict[int, float]] = defaultdict(dict)
    by_period: dict[Period, dict[int, float]] = defaultdict(dict)
    for m in mentions:
        p = period_of(m.date, granularity)
        by_entity[(m.entity_id, p)][m.sentence_id] = m.score
        by_period[p][m.sentence_id] = m.score

    def in_sample(p: Period) -> bool:
        if sample_span is None:
            return True
        return p.last_day >= sample_span[0] and p.first_day <= sample_span[1]

    def point(value: float, scores: Iterable[float], count: int, p: Period) -> IndexPoint:
        return IndexPoint(value, count, percentile_band(list(scores), step), in_sample(p))

    series: list[IndexSeries] = []
    entities = sorted({e for e, _ in by_entity})
    periods = sorted(by_period)
    for ent in entities:
        s = IndexSeries("entity", ent)
        for p in periods:
            scores = by_entity.get((ent, p))
            if scores:
                s.points[p] = point(entity_index(list(scores.values())), scores.values(), len(scores), p)
        series.append(s)

    for gid in sorted(groups):
        members = list(groups[gid])
        s = IndexSeries("group", gid)
        for p in periods:
            pairs = []
            pooled: dict[int, float] = {}
            for ent in members:
                scores = by_entity.get((ent, p), {})
                if scores:
                    pairs.append((entity_index(list(scores.values())), len(scores)))
                    pooled.update(scores)
            value = group_index(pairs, len(members), group_mode)
            if value is None:
                continue
            if value > 1.0:
                log.warning("group %s period %s: literal index %.3f exceeds 1", gid, p, value)
            s.points[p] = point(value, pooled.values(), sum(c for _, c in pairs), p)
        series.append(s)

    s = IndexSeries("global", "all")
    for p in periods:
        scores = by_period[p]
        s.points[p] = point(global_index(list(scores.values())), scores.values(), len(scores), p)
    series.append(s)
    return series


def write_index_csv(series: Sequence[IndexSeries], path: str | Path, step: int = 2) -> None:
    cols = [f"p{q:02d}" for q in percentile_steps(step)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "scope_id", "period", "value", "count", "in_sample", *cols])
        for s in series:
            for p in sorted(s.points):
                pt = s.points[p]
                w.writerow([s.scope, s.scope_id, str(p), f"{pt.value:.6f}", pt.count,
                            int(pt.in_sample), *(f"{v:.6f}" for v in pt.percentiles)])


def read_index_csv(path: str | Path) -> list[IndexSeries]:
    out: dict[tuple[str, str], IndexSeries] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            key = (r["scope"], r["scope_id"])
            s = out.setdefault(key, IndexSeries(*key))
            pct = np.array([float(v) for k, v in r.items() if k.startswith("p") and k[1:].isdigit()])
            s.points[Period.parse(r["period"])] = IndexPoint(
                float(r["value"]), int(r["count"]), pct, r["in_sample"] == "1")
    return list(out.values())
