"""Coincidence labels for (sentence, entity) pairs from event dates."""

from __future__ import annotations

import csv
import datetime as dt
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CorpusError, CorpusStore, parse_date

COINCIDING = 1
NON_COINCIDING = 0


@dataclass(frozen=True)
class Event:
    entity_id: str
    event_date: dt.date


@dataclass(frozen=True)
class WindowConfig:
    """Day-offset windows; offsets are ``sentence_date - event_date``."""

    inner: tuple[int, int] = (-8, 45)
    outer: tuple[int, int] = (-120, 120)
    coverage_pad: int = 120

    def __post_init__(self):
        for lo, hi in (self.inner, self.outer):
            if lo > hi:
                raise ValueError(f"window bounds out of order: [{lo}, {hi}]")
        if not (self.outer[0] <= self.inner[0] and self.inner[1] <= self.outer[1]):
            raise ValueError("inner window must lie inside the outer window")
        if self.coverage_pad < 0:
            raise ValueError("coverage_pad must be non-negative")


@dataclass(frozen=True)
class LabeledInstance:
    sentence_id: int
    entity_id: str
    label: int


def label_pair(
    sentence_date: dt.date,
    entity_id: str,
    events: Iterable[Event],
    windows: WindowConfig = WindowConfig(),
) -> int | None:
    """1 if any event puts the sentence inside the inner window, 0 if every
    event leaves it outside the outer window, ``None`` otherwise."""
    all_outside = True
    (ilo, ihi), (olo, ohi) = windows.inner, windows.outer
    for ev in events:
        if ev.entity_id != entity_id:
            continue
        off = (sentence_date - ev.event_date).days
        if ilo <= off <= ihi:
            return COINCIDING
        if olo <= off <= ohi:
            all_outside = False
    return NON_COINCIDING if all_outside else None


@dataclass
class LabelSummary:
    pairs: int
    coinciding: int
    non_coinciding: int
    ambiguous: int
    out_of_coverage: int

    @property
    def labeled(self) -> int:
        return self.coinciding + self.non_coinciding

    @property
    def positive_rate(self) -> float:
        return self.coinciding / self.labeled if self.labeled else 0.0

    @property
    def defined_rate(self) -> float:
        return self.labeled / self.pairs if self.pairs else 0.0


def coverage_span(events: Sequence[Event], pad: int) -> tuple[dt.date, dt.date]:
    dates = [e.event_date for e in events]
    delta = dt.timedelta(days=pad)
    return min(dates) - delta, max(dates) + delta


def label_corpus(
    store: CorpusStore,
    events: Sequence[Event],
    windows: WindowConfig = WindowConfig(),
) -> tuple[list[LabeledInstance], LabelSummary]:
    if not events:
        raise ValueError("empty event set: nothing to supervise")
    by_entity: dict[str, list[Event]] = defaultdict(list)
    for ev in events:
        by_entity[ev.entity_id].append(ev)
    lo, hi = coverage_span(events, windows.coverage_pad)

    instances = []
    counts = dict(pairs=0, coinciding=0, non_coinciding=0, ambiguous=0, out_of_coverage=0)
    for s in store.sentences:
        if not s.mentions:
            continue
        for ent in sorted(s.mentions):
            counts["pairs"] += 1
            if not lo <= s.date <= hi:
                counts["out_of_coverage"] += 1
                continue
            lab = label_pair(s.date, ent, by_entity.get(ent, ()), windows)
            if lab is None:
                counts["ambiguous"] += 1
                continue
            counts["coinciding" if lab else "non_coinciding"] += 1
            instances.append(LabeledInstance(s.sentence_id, ent, lab))
    return instances, LabelSummary(**counts)


def read_events(path: str | Path) -> list[Event]:
    events = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return events
        if [h.strip() for h in header] != ["entity_id", "event_date"]:
            raise CorpusError("event file header must be 'entity_id,event_date'", 1)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 2:
                raise CorpusError("expected 2 fields", lineno)
            try:
                events.append(Event(row[0].strip(), parse_date(row[1])))
            except ValueError:
                raise CorpusError(f"unparseable date {row[1]!r}", lineno) from None
    return events


def write_events(events: Iterable[Event], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_id", "event_date"])
        for e in events:
            w.writerow([e.entity_id, e.event_date.isoformat()])


def write_labels(instances: Iterable[LabeledInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sentence_id", "entity_id", "label"])
        for inst in instances:
            w.writerow([inst.sentence_id, inst.entity_id, inst.label])


def read_labels(path: str | Path) -> list[LabeledInstance]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            LabeledInstance(int(r["sentence_id"]), r["entity_id"], int(r["label"]))
            for r in reader
        ]
