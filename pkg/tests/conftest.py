import datetime as dt

import numpy as np
import pytest

from newsevents.corpus import CorpusStore, Document, Sentence


def store_from_tokens(sentences, mentions=None, date=dt.date(2010, 1, 1)):
    """One document per token list; every sentence mentions entity ``x`` unless told otherwise."""
    docs, sents = [], []
    for i, toks in enumerate(sentences):
        doc_id = f"d{i:05d}"
        docs.append(Document(doc_id, date, " ".join(toks)))
        ment = frozenset({"x"}) if mentions is None else frozenset(mentions[i])
        sents.append(Sentence(i, doc_id, date, 0, list(toks), ment))
    return CorpusStore(docs, sents)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
