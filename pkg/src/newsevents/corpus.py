"""Document ingest, sentence splitting, tokenization and entity mention lookup."""

from __future__ import annotations

import datetime as dt
import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PUNCT = frozenset(string.punctuation)
_TERMINATORS = ".!?"


class CorpusError(ValueError):
    """Malformed corpus or lexicon input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Document:
    doc_id: str
    date: dt.date
    text: str


@dataclass
class Sentence:
    sentence_id: int
    doc_id: str
    date: dt.date
    position: int
    tokens: list[str]
    mentions: frozenset[str] = frozenset()


@dataclass
class SurfaceForm:
    tokens: tuple[str, ...]
    case_sensitive: bool = False


@dataclass
class EntityLexicon:
    entries: dict[str, list[SurfaceForm]] = field(default_factory=dict)
    groups: dict[str, list[str]] = field(default_factory=dict)

    def add(self, entity_id: str, forms: Iterable[str], groups: Iterable[str] = ()):
        parsed = []
        for form in forms:
            cs = form.startswith("cs:")
            text = form[3:] if cs else form
            toks = tuple(tokenize(text, lower=not cs))
            if not toks:
                raise CorpusError(f"empty surface form for entity {entity_id!r}")
            parsed.append(SurfaceForm(toks, cs))
        if not parsed:
            raise CorpusError(f"entity {entity_id!r} has no surface forms")
        self.entries[entity_id] = parsed
        self.groups[entity_id] = [g for g in groups if g]

    @property
    def entity_ids(self) -> list[str]:
        return sorted(self.entries)

    def group_members(self) -> dict[str, list[str]]:
        members: dict[str, list[str]] = {}
        for ent in sorted(self.groups):
            for g in self.groups[ent]:
                members.setdefault(g, []).append(ent)
        return members


def _ends_sentence(text: str, i: int) -> bool:
    """Whether the terminator at ``text[i]`` closes a sentence."""
    j = i + 1
    if j < len(text):
        # must be followed by whitespace, then an uppercase letter
        if not text[j].isspace():
            return False
        while j < len(text) and text[j].isspace():
            j += 1
        if j < len(text) and not text[j].isupper():
            return False
    if text[i] == ".":
        start = i
        while start > 0 and not text[start - 1].isspace():
            start -= 1
        stem = text[start:i]
        if len(stem) == 1 and stem.isupper():
            return False
        if len(stem) <= 3 and "." in stem:
            return False
    return True


def split_sentences(text: str) -> list[str]:
    """Split raw text into sentences.

    A sentence ends at ``.``, ``!`` or ``?`` followed by whitespace and an
    uppercase letter, or at the end of the text. Periods after a single
    capital (initials) or closing short dotted tokens (``U.S.``) are not
    boundaries.
    """
    out = []
    start = 0
    for i, ch in enumerate(text):
        if ch in _TERMINATORS and _ends_sentence(text, i):
            piece = text[start : i + 1].strip()
            if piece:
                out.append(piece)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def tokenize(sentence: str, lower: bool = True) -> list[str]:
    """Whitespace tokenization with leading/trailing punctuation split off."""
    if lower:
        sentence = sentence.lower()
    tokens: list[str] = []
    for word in sentence.split():
        lead = 0
        while lead < len(word) and word[lead] in PUNCT:
            lead += 1
        trail = len(word)
        while trail > lead and word[trail - 1] in PUNCT:
            trail -= 1
        tokens.extend(word[:lead])
        if trail > lead:
            tokens.append(word[lead:trail])
        tokens.extend(word[trail:])
    return tokens


def _contains(seq: Sequence[str], sub: Sequence[str]) -> bool:
    n = len(sub)
    first = sub[0]
    for i in range(len(seq) - n + 1):
        if seq[i] == first and tuple(seq[i : i + n]) == tuple(sub):
            return True
    return False


def match_entities(
    tokens: Sequence[str],
    lexicon: EntityLexicon,
    raw_tokens: Sequence[str] | None = None,
) -> set[str]:
    """Entities with a surface form occurring contiguously in ``tokens``.

    Case-sensitive forms are checked against ``raw_tokens`` (the tokens
    before lowercasing); when those are not supplied they never match.
    """
    found = set()
    for ent, forms in lexicon.entries.items():
        for form in forms:
            seq = raw_tokens if form.case_sensitive else tokens
            if seq is not None and _contains(seq, form.tokens):
                found.add(ent)
                break
    return found


def parse_date(value: str) -> dt.date:
    return dt.date.fromisoformat(value.strip())


def unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt in "tn\\":
                out.append({"t": "\t", "n": "\n", "\\": "\\"}[nxt])
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def read_lexicon(path: str | Path) -> EntityLexicon:
    lex = EntityLexicon()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise CorpusError("expected entity_id, groups and >=1 surface form", lineno)
            ent = parts[0].strip()
            if not ent:
                raise CorpusError("empty entity_id", lineno)
            if ent in lex.entries:
                raise CorpusError(f"duplicate entity_id {ent!r}", lineno)
            groups = [g.strip() for g in parts[1].split(",") if g.strip()]
            forms = [f for f in parts[2:] if f.strip()]
            try:
                lex.add(ent, forms, groups)
            except CorpusError as exc:
                raise CorpusError(str(exc), lineno) from None
    return lex


def write_lexicon(lexicon: EntityLexicon, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ent in lexicon.entity_ids:
            forms = [
                ("cs:" if f.case_sensitive else "") + " ".join(f.tokens)
                for f in lexicon.entries[ent]
            ]
            fh.write("\t".join([ent, ",".join(lexicon.groups.get(ent, [])), *forms]) + "\n")


def read_documents(path: str | Path) -> list[Document]:
    docs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"expected 3 tab-separated fields, got {len(parts)}", lineno)
            doc_id, date_s, text = parts
            if not doc_id:
                raise CorpusError("empty doc_id", lineno)
            if doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc_id!r}", lineno)
            try:
                date = parse_date(date_s)
            except ValueError:
                raise CorpusError(f"unparseable date {date_s!r}", lineno) from None
            seen.add(doc_id)
            docs.append(Document(doc_id, date, unescape(text)))
    return docs


class CorpusStore:
    """Immutable-after-ingest collection of documents and their sentences.

    ``sentences`` is indexed by ``sentence_id``; sentences of one document
    are stored contiguously in position order.
    """

    def __init__(self, documents: list[Document], sentences: list[Sentence]):
        self.documents = documents
        self.sentences = sentences
        self._doc_span: dict[str, tuple[int, int]] = {}
        for s in sentences:
            lo, hi = self._doc_span.get(s.doc_id, (s.sentence_id, s.sentence_id))
            self._doc_span[s.doc_id] = (min(lo, s.sentence_id), max(hi, s.sentence_id))

    @property
    def mention_ids(self) -> list[int]:
        return [s.sentence_id for s in self.sentences if s.mentions]

    def counts(self) -> dict[str, int]:
        return {
            "documents": len(self.documents),
            "sentences": len(self.sentences),
            "mention_sentences": sum(1 for s in self.sentences if s.mentions),
        }

    def neighbor(self, sentence_id: int, offset: int) -> Sentence | None:
        """Sentence at ``position + offset`` in the same document, if any."""
        s = self.sentences[sentence_id]
        target = sentence_id + offset
        lo, hi = self._doc_span[s.doc_id]
        if lo <= target <= hi:
            return self.sentences[target]
        return None

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for d in self.documents:
                fh.write(json.dumps({"doc": d.doc_id, "date": d.date.isoformat(), "text": d.text}) + "\n")
            for s in self.sentences:
                rec = {
                    "sid": s.sentence_id,
                    "doc": s.doc_id,
                    "pos": s.position,
                    "tokens": s.tokens,
                    "mentions": sorted(s.mentions),
                }
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusStore":
        docs: list[Document] = []
        sentences: list[Sentence] = []
        dates: dict[str, dt.date] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if "text" in rec:
                    d = Document(rec["doc"], parse_date(rec["date"]), rec["text"])
                    dates[d.doc_id] = d.date
                    docs.append(d)
                else:
                    sentences.append(
                        Sentence(
                            rec["sid"],
                            rec["doc"],
                            dates[rec["doc"]],
                            rec["pos"],
                            rec["tokens"],
                            frozenset(rec["mentions"]),
                        )
                    )
        return cls(docs, sentences)


def build_store(documents: list[Document], lexicon: EntityLexicon) -> CorpusStore:
    sentences = []
    for doc in documents:
        pos = 0
        for text in split_sentences(doc.text):
            raw = tokenize(text, lower=False)
            if not raw:
                continue
            toks = [t.lower() for t in raw]
            mentions = frozenset(match_entities(toks, lexicon, raw))
            sentences.append(Sentence(len(sentences), doc.doc_id, doc.date, pos, toks, mentions))
            pos += 1
    return CorpusStore(documents, sentences)


def ingest(corpus_file: str | Path, lexicon_file: str | Path) -> tuple[CorpusStore, EntityLexicon]:
    lexicon = read_lexicon(lexicon_file)
    store = build_store(read_documents(corpus_file), lexicon)
    return store, lexicon
