from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence


class EmptyVocabularyError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Words ordered by descending frequency, ties broken lexicographically."""

    words: list[str]
    counts: list[int]
    min_count: int = 1

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def encode(self, tokens: Sequence[str]) -> list[int]:
        """Word ids of in-vocabulary tokens; unknown tokens are dropped."""
        idx = self.index
        return [idx[t] for t in tokens if t in idx]

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int = 1) -> "Vocabulary":
        kept = sorted(
            ((w, c) for w, c in counts.items() if c >= min_count),
            key=lambda wc: (-wc[1], wc[0]),
        )
        if not kept:
            raise EmptyVocabularyError(f"no word occurs at least {min_count} times")
        return cls([w for w, _ in kept], [c for _, c in kept], min_count)


def build_vocab(token_lists: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    counts: Counter = Counter()
    for toks in token_lists:
        counts.update(toks)
    return Vocabulary.from_counts(counts, min_count)
