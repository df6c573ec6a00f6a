"""Ranking of text excerpts by combined center/neighbor relevance."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classify import RelevanceClassifier
from .corpus import CorpusStore, Sentence
from .embed import EmbeddingModel, extract_vector, infer_vectors
from .signals import Period, period_of

log = logging.getLogger(__name__)


@dataclass
class Excerpt:
    sentence_id: int
    score: float
    date: dt.date
    doc_id: str
    entity_ids: tuple[str, ...]
    center: str
    prev: str | None = None
    next: str | None = None
    rank: int = 0


@dataclass(frozen=True)
class InferenceSettings:
    samples: int = 100
    steps: int = 50
    lr: float = 0.0125
    min_lr: float = 0.0001
    seed: int = 0


def _text(s: Sentence | None) -> str | None:
    return None if s is None else " ".join(s.tokens)


def neighbor_score(
    clf: RelevanceClassifier,
    model: EmbeddingModel,
    sentence: Sentence,
    settings: InferenceSettings,
) -> float | None:
    """Posterior of the averaged inferred vectors of ``sentence``.

    None when no token of the sentence is in the vocabulary.
    """
    if not model.vocab.encode(sentence.tokens):
        return None
    seeds = [(settings.seed, sentence.sentence_id, j) for j in range(settings.samples)]
    vecs = infer_vectors(model, sentence.tokens, settings.steps, seeds, settings.lr, settings.min_lr)
    return float(clf.predict_proba(vecs.mean(axis=0))[0, 1])


def score_excerpt(
    clf: RelevanceClassifier,
    model: EmbeddingModel,
    store: CorpusStore,
    sentence_id: int,
    settings: InferenceSettings = InferenceSettings(),
) -> float:
    """Max of the center posterior and the neighbors' inferred posteriors."""
    terms = [float(clf.predict_proba(extract_vector(model, sentence_id))[0, 1])]
    for offset in (-1, 1):
        nb = store.neighbor(sentence_id, offset)
        if nb is None:
            continue
        s = neighbor_score(clf, model, nb, settings)
        if s is not None:
            terms.append(s)
    return max(terms)


def candidates(
    store: CorpusStore,
    model: EmbeddingModel,
    period: Period,
    entity_set: Iterable[str] | None,
) -> list[Sentence]:
    wanted = None if entity_set is None else set(entity_set)
    out = []
    for s in store.sentences:
        if not s.mentions or not model.has_vector(s.sentence_id):
            continue
        if period_of(s.date, period.unit) != period:
            continue
        if wanted is not None and not (s.mentions & wanted):
            continue
        out.append(s)
    return out


def rank_excerpts(
    clf: RelevanceClassifier,
    model: EmbeddingModel,
    store: CorpusStore,
    period: Period,
    entity_set: Iterable[str] | None = None,
    k: int = 10,
    settings: InferenceSettings = InferenceSettings(),
) -> list[Excerpt]:
    """Top-``k`` excerpts for a period, deduplicated on identical token sequences.

    ``entity_set=None`` admits every entity.
    """
    cands = candidates(store, model, period, entity_set)
    scored = []
    for s in cands:
        x = score_excerpt(clf, model, store, s.sentence_id, settings)
        scored.append((-x, s.date, s.doc_id, s.position, s))
    scored.sort(key=lambda t: t[:4])

    seen: set[tuple[str, ...]] = set()
    out: list[Excerpt] = []
    for neg_x, _, _, _, s in scored:
        key = tuple(s.tokens)
        if key in seen:
            log.info("dropped duplicate excerpt %d (%s)", s.sentence_id, s.doc_id)
            continue
        seen.add(key)
        if len(out) < k:
            out.append(Excerpt(
                sentence_id=s.sentence_id,
                score=-neg_x,
                date=s.date,
                doc_id=s.doc_id,
                entity_ids=tuple(sorted(s.mentions)),
                center=" ".join(s.tokens),
                prev=_text(store.neighbor(s.sentence_id, -1)),
                next=_text(store.neighbor(s.sentence_id, 1)),
                rank=len(out) + 1,
            ))
    return out


def write_excerpts_csv(excerpts: Sequence[Excerpt], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "score", "date", "doc_id", "entity_ids", "prev", "center", "next"])
        for e in excerpts:
            w.writerow([e.rank, f"{e.score:.6f}", e.date.isoformat(), e.doc_id,
                        ",".join(e.entity_ids), e.prev or "", e.center, e.next or ""])


def format_excerpts(excerpts: Sequence[Excerpt], source: str = "corpus") -> str:
    blocks = []
    for e in excerpts:
        body = " ".join(t for t in (e.prev, e.center, e.next) if t)
        blocks.append(f'"{body}"\n({source} {e.date.isoformat()}, relevance {e.score:.3f}, '
                      f"rank {e.rank})")
    return "\n\n".join(blocks) + ("\n" if blocks else "")
