"""Synthetic news corpora with planted, time-localized event language."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EntityLexicon, escape, write_lexicon
from .labeling import Event, WindowConfig, write_events

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "kr"]
_VOWELS = ["a", "e", "i", "o", "u"]
_GROUPS = ["AA", "BB", "CC", "DD", "EE", "FF"]


@dataclass(frozen=True)
class SynthConfig:
    n_entities: int = 20
    events_per_entity: float = 2.5
    start: dt.date = dt.date(2007, 1, 1)
    end: dt.date = dt.date(2013, 6, 30)
    event_start: dt.date = dt.date(2007, 7, 1)
    event_end: dt.date = dt.date(2012, 6, 30)
    min_event_gap: int = 90
    background_vocab: int = 2000
    event_vocab: int = 30
    intensity: float = 0.9
    event_token_share: float = 0.5
    sentences_per_entity_day: float = 0.4
    neighbor_prob: float = 0.75
    min_len: int = 16
    max_len: int = 30
    zipf_exponent: float = 1.1
    windows: WindowConfig = field(default_factory=WindowConfig)
    seed: int = 7

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity must lie in [0, 1]")
        if not 0.0 <= self.event_token_share <= 1.0:
            raise ValueError("event_token_share must lie in [0, 1]")
        for name in ("events_per_entity", "sentences_per_entity_day", "neighbor_prob"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.start > self.end or self.event_start > self.event_end:
            raise ValueError("date spans out of order")


@dataclass
class ManifestRow:
    sentence_id: int
    planted: int
    entity_id: str
    event_date: dt.date | None


@dataclass
class SynthCorpus:
    documents: list[tuple[str, dt.date, str]]
    lexicon: EntityLexicon
    events: list[Event]
    manifest: list[ManifestRow]
    background_words: list[str]
    event_words: list[str]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.tsv",
            "lexicon": out / "lexicon.tsv",
            "events": out / "events.csv",
            "manifest": out / "manifest.csv",
        }
        with open(paths["corpus"], "w", encoding="utf-8", newline="\n") as fh:
            for doc_id, date, text in self.documents:
                fh.write(f"{doc_id}\t{date.isoformat()}\t{escape(text)}\n")
        write_lexicon(self.lexicon, paths["lexicon"])
        write_events(self.events, paths["events"])
        with open(paths["manifest"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sentence_id", "planted", "entity_id", "event_date"])
            for r in self.manifest:
                w.writerow([r.sentence_id, r.planted, r.entity_id,
                            r.event_date.isoformat() if r.event_date else ""])
        return paths


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str], syllables=(2, 4)) -> list[str]:
    words = []
    while len(words) < n:
        k = int(rng.integers(syllables[0], syllables[1] + 1))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(k))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _event_dates(rng, count, lo: dt.date, hi: dt.date, gap: int) -> list[dt.date]:
    span = (hi - lo).days
    for _ in range(1000):
        days = np.sort(rng.integers(0, span + 1, size=count))
        if count < 2 or np.min(np.diff(days)) >= gap:
            break
    return [lo + dt.timedelta(days=int(d)) for d in days]


def _sentence_text(tokens: list[str]) -> str:
    return " ".join([tokens[0].capitalize(), *tokens[1:]]) + "."


def read_manifest(path: str | Path) -> list[ManifestRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [
            ManifestRow(int(r["sentence_id"]), int(r["planted"]), r["entity_id"],
                        dt.date.fromisoformat(r["event_date"]) if r["event_date"] else None)
            for r in csv.DictReader(fh)
        ]


def generate(config: SynthConfig = SynthConfig()) -> SynthCorpus:
    """Build a corpus whose entity sentences near events carry event words.

    A mention sentence for entity ``b`` dated inside the inner window of one
    of ``b``'s events is planted with probability ``intensity``; a planted
    sentence draws ``event_token_share`` of its words from the event
    vocabulary. Every mention sentence sits in its own document, optionally
    preceded and followed by one background sentence. Sentence ids in the
    manifest follow the order in which ingest numbers sentences.
    """
    rng = np.random.default_rng(config.seed)
    taken: set[str] = set()
    background = _pseudo_words(rng, config.background_vocab, taken)
    event_words = _pseudo_words(rng, config.event_vocab, taken)
    ranks = np.arange(1, config.background_vocab + 1, dtype=np.float64)
    zipf_p = ranks ** -config.zipf_exponent
    zipf_p /= zipf_p.sum()

    lexicon = EntityLexicon()
    names = []
    for i in range(config.n_entities):
        name = _pseudo_words(rng, 1, taken, syllables=(2, 3))[0]
        ent = f"E{i:02d}"
        groups = [_GROUPS[i % len(_GROUPS)]]
        if i % 7 == 3:
            groups.append(_GROUPS[(i + 1) % len(_GROUPS)])
        lexicon.add(ent, [f"{name} bank"], groups)
        names.append(name)

    total_events = int(round(config.events_per_entity * config.n_entities))
    base, extra = divmod(total_events, max(config.n_entities, 1))
    events: list[Event] = []
    for i in range(config.n_entities):
        count = base + (1 if i < extra else 0)
        for d in _event_dates(rng, count, config.event_start, config.event_end, config.min_event_gap):
            events.append(Event(f"E{i:02d}", d))
    events.sort(key=lambda e: (e.event_date, e.entity_id))
    by_entity: dict[str, list[dt.date]] = {}
    for e in events:
        by_entity.setdefault(e.entity_id, []).append(e.event_date)

    ilo, ihi = config.windows.inner

    def bg_tokens(n: int) -> list[str]:
        return [background[j] for j in rng.choice(config.background_vocab, size=n, p=zipf_p)]

    documents = []
    manifest: list[ManifestRow] = []
    n_days = (config.end - config.start).days + 1
    for day in range(n_days):
        date = config.start + dt.timedelta(days=day)
        for i in range(config.n_entities):
            ent = f"E{i:02d}"
            for _ in range(int(rng.poisson(config.sentences_per_entity_day))):
                hit = None
                for ed in by_entity.get(ent, ()):
                    if ilo <= (date - ed).days <= ihi:
                        hit = ed
                        break
                planted = hit is not None and rng.random() < config.intensity
                length = int(rng.integers(config.min_len, config.max_len + 1))
                toks = bg_tokens(length)
                if planted:
                    k = max(1, int(round(config.event_token_share * length)))
                    slots = rng.choice(length, size=k, replace=False)
                    for s in slots:
                        toks[s] = event_words[rng.integers(config.event_vocab)]
                at = int(rng.integers(0, length + 1))
                toks[at:at] = [names[i], "bank"]

                sents = []
                rows = []
                if rng.random() < config.neighbor_prob:
                    sents.append(bg_tokens(int(rng.integers(config.min_len, config.max_len + 1))))
                    rows.append(("", 0, None))
                sents.append(toks)
                rows.append((ent, int(planted), hit if planted else None))
                if rng.random() < config.neighbor_prob:
                    sents.append(bg_tokens(int(rng.integers(config.min_len, config.max_len + 1))))
                    rows.append(("", 0, None))
                for ent_id, flag, ed in rows:
                    manifest.append(ManifestRow(len(manifest), flag, ent_id, ed))
                doc_id = f"d{len(documents):07d}"
                documents.append((doc_id, date, " ".join(_sentence_text(s) for s in sents)))
    return SynthCorpus(documents, lexicon, events, manifest, background, event_words)
