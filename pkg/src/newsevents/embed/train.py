from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus import CorpusStore
from . import _kernels
from .huffman import build_huffman
from .model import EmbeddingModel
from .vocab import Vocabulary, build_vocab

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 600
    context_n: int = 5
    epochs: int = 10
    lr: float = 0.025
    min_lr: float = 0.0001
    min_count: int = 1
    seed: int = 1
    include_word_only_pass: bool = True
    use_projection: bool = False
    learn_projection: bool = False
    threads: int = 1
    infer_steps: int = 50
    infer_lr: float | None = None  # defaults to lr / 2

    def __post_init__(self):
        if not self.lr > self.min_lr > 0:
            raise ValueError("need lr > min_lr > 0")
        if self.epochs < 1 or self.dim < 1 or self.context_n < 1:
            raise ValueError("epochs, dim and context_n must be positive")


class Packed:
    """Flattened word-id sequences with per-sentence offsets and vector rows."""

    def __init__(self, seqs: Sequence[Sequence[int]], rows: Sequence[int]):
        lens = np.array([len(s) for s in seqs], dtype=np.int64)
        self.offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
        np.cumsum(lens, out=self.offsets[1:])
        self.tokens = (
            np.concatenate([np.asarray(s, dtype=np.int32) for s in seqs])
            if seqs
            else np.zeros(0, dtype=np.int32)
        )
        self.tokens = self.tokens.astype(np.int32)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.lengths = lens

    def __len__(self) -> int:
        return len(self.rows)


def _run(model: EmbeddingModel, packed: Packed, order, epochs, lr0, lr1, done, total,
         sent_vecs=None, learn_shared=True):
    return _kernels.run_windows(
        packed.tokens,
        packed.offsets,
        packed.rows,
        np.asarray(order, dtype=np.int64),
        epochs,
        model.word_vecs,
        model.sent_vecs if sent_vecs is None else sent_vecs,
        model.node_vecs,
        model.proj,
        model.bias,
        model.use_proj,
        model.learn_proj and learn_shared,
        learn_shared,
        learn_shared,
        model.tree.codes,
        model.tree.points,
        model.tree.lengths,
        model.context_n,
        lr0,
        lr1,
        float(done),
        float(total),
    )


def mean_log_prob(model: EmbeddingModel, packed: Packed, sent_vecs=None) -> float:
    total, n = _kernels.score_windows(
        packed.tokens, packed.offsets, packed.rows, model.word_vecs,
        model.sent_vecs if sent_vecs is None else sent_vecs,
        model.node_vecs, model.proj, model.bias, model.use_proj,
        model.tree.codes, model.tree.points, model.tree.lengths, model.context_n,
    )
    return total / n if n else float("nan")


def pack_store(store: CorpusStore, vocab: Vocabulary, model: EmbeddingModel | None,
               include_word_only: bool) -> Packed:
    seqs, rows = [], []
    for s in store.sentences:
        if s.mentions:
            seqs.append(vocab.encode(s.tokens))
            rows.append(model.row_of(s.sentence_id) if model is not None else -1)
        elif include_word_only:
            seqs.append(vocab.encode(s.tokens))
            rows.append(-1)
    return Packed(seqs, rows)


def train_dm(store: CorpusStore, config: TrainConfig = TrainConfig(),
             vocab: Vocabulary | None = None) -> EmbeddingModel:
    """Train word, sentence and output vectors on ``store``.

    Every mention-bearing sentence gets a vector; other sentences only
    train words and output nodes when ``include_word_only_pass`` is set.
    With ``threads > 1`` workers update the shared arrays without locks,
    so results are not bit-reproducible.
    """
    if vocab is None:
        vocab = build_vocab((s.tokens for s in store.sentences), config.min_count)
    tree = build_huffman(vocab.counts)
    mention_ids = store.mention_ids
    model = EmbeddingModel.initialize(
        vocab, tree, mention_ids, config.dim, config.context_n, config.seed,
        use_proj=config.use_projection or config.learn_projection,
        learn_proj=config.learn_projection,
    )
    packed = pack_store(store, vocab, model, config.include_word_only_pass)
    short = packed.lengths < config.context_n + 1
    model.skipped_short = [
        int(model.sentence_ids[r]) for r, is_short in zip(packed.rows, short) if is_short and r >= 0
    ]
    if model.skipped_short:
        log.info("%d sentences shorter than %d in-vocabulary tokens keep their initial vectors",
                 len(model.skipped_short), config.context_n + 1)

    rng = np.random.default_rng(config.seed + 1)
    total = float(len(packed) * config.epochs)
    done = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(packed))
        if config.threads <= 1:
            logp, n = _run(model, packed, order, 1, config.lr, config.min_lr, done, total)
        else:
            chunks = np.array_split(order, config.threads)
            starts = np.cumsum([0] + [len(c) for c in chunks[:-1]])
            with ThreadPoolExecutor(config.threads) as pool:
                results = list(pool.map(
                    lambda args: _run(model, packed, args[0], 1, config.lr, config.min_lr,
                                      done + args[1], total),
                    zip(chunks, starts),
                ))
            logp = sum(r[0] for r in results)
            n = sum(r[1] for r in results)
        done += len(packed)
        model.history.append(logp / n if n else float("nan"))
        log.info("epoch %d: mean log prob %.4f over %d windows", epoch + 1, model.history[-1], n)
    return model


def infer_vector(model: EmbeddingModel, tokens: Sequence[str], steps: int = 50, seed: int = 0,
                 lr: float = 0.0125, min_lr: float = 0.0001) -> np.ndarray:
    """Fit a fresh sentence vector to ``tokens`` with all shared weights frozen."""
    return infer_vectors(model, tokens, steps, [seed], lr, min_lr)[0]


def infer_vectors(model: EmbeddingModel, tokens: Sequence[str], steps: int, seeds: Sequence[int],
                  lr: float = 0.0125, min_lr: float = 0.0001) -> np.ndarray:
    """Independent inferred vectors for one sentence, one per seed.

    Returns projected vectors (``bias + proj @ d``), shape ``(len(seeds), dim)``.
    """
    ids = model.vocab.encode(tokens)
    if not ids:
        raise ValueError("all tokens are out of vocabulary")
    dim = model.dim
    dtype = model.word_vecs.dtype
    init = np.empty((len(seeds), dim), dtype=dtype)
    for i, s in enumerate(seeds):
        init[i] = (np.random.default_rng(s).random(dim) - 0.5) / dim
    if steps > 0 and len(ids) > model.context_n:
        packed = Packed([ids], [0])
        lr_end = min(min_lr, lr)
        # one call per sample keeps each schedule independent of batch size
        for i in range(len(seeds)):
            _run(model, packed, [0], steps, lr, lr_end, 0, steps,
                 sent_vecs=init[i : i + 1], learn_shared=False)
    out = init.astype(np.float64)
    if model.use_proj:
        out = out @ model.proj.astype(np.float64).T + model.bias.astype(np.float64)
    return out


def is_finite(model: EmbeddingModel) -> bool:
    return all(
        np.isfinite(m).all()
        for m in (model.word_vecs, model.node_vecs, model.sent_vecs, model.proj, model.bias)
    ) and all(math.isfinite(h) for h in model.history)
