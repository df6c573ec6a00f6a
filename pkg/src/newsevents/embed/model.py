from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .huffman import HuffmanTree
from .vocab import Vocabulary

MAGIC = b"NEVEMBD\x00"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class EmbeddingModel:
    """Distributed-memory sentence model with a hierarchical-softmax output.

    Sentence vectors are stored one row per trained sentence; ``sentence_ids``
    maps each row back to its corpus sentence id. ``proj``/``bias`` form the
    affine projection applied to the averaged input (identity and zero by
    default).
    """

    dim: int
    context_n: int
    vocab: Vocabulary
    tree: HuffmanTree
    word_vecs: np.ndarray
    node_vecs: np.ndarray
    sent_vecs: np.ndarray
    sentence_ids: np.ndarray
    proj: np.ndarray
    bias: np.ndarray
    use_proj: bool = False
    learn_proj: bool = False
    history: list[float] = field(default_factory=list)
    skipped_short: list[int] = field(default_factory=list)

    def __post_init__(self):
        self._rows = {int(s): i for i, s in enumerate(self.sentence_ids)}

    def row_of(self, sentence_id: int) -> int:
        try:
            return self._rows[int(sentence_id)]
        except KeyError:
            raise KeyError(f"sentence {sentence_id} has no trained vector") from None

    def has_vector(self, sentence_id: int) -> bool:
        return int(sentence_id) in self._rows

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not self.use_proj:
            return x
        return self.bias.astype(np.float64) + self.proj.astype(np.float64) @ x

    @classmethod
    def initialize(
        cls,
        vocab: Vocabulary,
        tree: HuffmanTree,
        sentence_ids: Sequence[int],
        dim: int,
        context_n: int,
        seed: int,
        use_proj: bool = False,
        learn_proj: bool = False,
        dtype=np.float32,
    ) -> "EmbeddingModel":
        rng = np.random.default_rng(seed)
        v = len(vocab)
        word_vecs = ((rng.random((v, dim)) - 0.5) / dim).astype(dtype)
        sent_vecs = ((rng.random((len(sentence_ids), dim)) - 0.5) / dim).astype(dtype)
        return cls(
            dim=dim,
            context_n=context_n,
            vocab=vocab,
            tree=tree,
            word_vecs=word_vecs,
            node_vecs=np.zeros((v - 1, dim), dtype=dtype),
            sent_vecs=sent_vecs,
            sentence_ids=np.asarray(sentence_ids, dtype=np.int64),
            proj=np.eye(dim, dtype=dtype),
            bias=np.zeros(dim, dtype=dtype),
            use_proj=use_proj,
            learn_proj=learn_proj,
        )

    # --- persistence -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            self.write(fh)

    def write(self, fh: BinaryIO) -> None:
        v = len(self.vocab)
        flags = int(self.use_proj) | (int(self.learn_proj) << 1)
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, self.dim, self.context_n, flags))
        fh.write(struct.pack("<II", v, self.vocab.min_count))
        for w, c in zip(self.vocab.words, self.vocab.counts):
            raw = w.encode("utf-8")
            fh.write(struct.pack("<IQ", len(raw), c))
            fh.write(raw)
        fh.write(struct.pack("<I", self.tree.codes.shape[1]))
        fh.write(self.tree.lengths.astype("<i4").tobytes())
        fh.write(self.tree.codes.astype("i1").tobytes())
        fh.write(self.tree.points.astype("<i4").tobytes())
        fh.write(struct.pack("<I", len(self.sentence_ids)))
        fh.write(self.sentence_ids.astype("<i8").tobytes())
        for mat in (self.word_vecs, self.node_vecs, self.sent_vecs, self.proj, self.bias):
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingModel":
        with open(path, "rb") as fh:
            return cls.read(fh)

    @classmethod
    def read(cls, fh: BinaryIO) -> "EmbeddingModel":
        if fh.read(len(MAGIC)) != MAGIC:
            raise ModelFormatError("not an embedding model file")
        version, dim, context_n, flags = _unpack(fh, "<IIII")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported format version {version}")
        v, min_count = _unpack(fh, "<II")
        words, counts = [], []
        for _ in range(v):
            n, c = _unpack(fh, "<IQ")
            words.append(fh.read(n).decode("utf-8"))
            counts.append(c)
        (max_len,) = _unpack(fh, "<I")
        lengths = _array(fh, "<i4", (v,)).astype(np.int32)
        codes = _array(fh, "i1", (v, max_len)).astype(np.int8)
        points = _array(fh, "<i4", (v, max_len)).astype(np.int32)
        (s,) = _unpack(fh, "<I")
        sentence_ids = _array(fh, "<i8", (s,)).astype(np.int64)
        shapes = [(v, dim), (v - 1, dim), (s, dim), (dim, dim), (dim,)]
        word_vecs, node_vecs, sent_vecs, proj, bias = (
            _array(fh, "<f4", shp).astype(np.float32) for shp in shapes
        )
        return cls(
            dim=dim,
            context_n=context_n,
            vocab=Vocabulary(words, counts, min_count),
            tree=HuffmanTree(codes, points, lengths),
            word_vecs=word_vecs,
            node_vecs=node_vecs,
            sent_vecs=sent_vecs,
            sentence_ids=sentence_ids,
            proj=proj,
            bias=bias,
            use_proj=bool(flags & 1),
            learn_proj=bool(flags & 2),
        )


def _unpack(fh: BinaryIO, fmt: str):
    size = struct.calcsize(fmt)
    buf = fh.read(size)
    if len(buf) != size:
        raise ModelFormatError("truncated model file")
    return struct.unpack(fmt, buf)


def _array(fh: BinaryIO, dtype: str, shape) -> np.ndarray:
    count = int(np.prod(shape))
    nbytes = count * np.dtype(dtype).itemsize
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise ModelFormatError("truncated model file")
    return np.frombuffer(buf, dtype=dtype).reshape(shape)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def hs_prob(model: EmbeddingModel, input_vector: np.ndarray, word: str | int) -> float:
    """Hierarchical-softmax probability of ``word`` given an averaged input.

    ``input_vector`` is the pre-projection mean of the sentence and context
    vectors; the model's projection is applied before the path products.
    """
    if isinstance(word, str):
        if word not in model.vocab:
            raise KeyError(f"unknown word {word!r}")
        w = model.vocab.index[word]
    else:
        w = int(word)
        if not 0 <= w < len(model.vocab):
            raise KeyError(f"unknown word id {w}")
    z = model.project(input_vector)
    n = model.tree.lengths[w]
    nodes = model.node_vecs[model.tree.points[w, :n]].astype(np.float64)
    signs = 1.0 - 2.0 * model.tree.codes[w, :n]
    return float(np.prod(_sigmoid(signs * (nodes @ z))))


def extract_vector(model: EmbeddingModel, sentence_id: int) -> np.ndarray:
    """Sentence vector ``bias + proj @ D_s`` for a trained sentence."""
    row = model.sent_vecs[model.row_of(sentence_id)].astype(np.float64)
    return model.project(row)


def extract_matrix(model: EmbeddingModel, sentence_ids: Sequence[int]) -> np.ndarray:
    rows = np.array([model.row_of(s) for s in sentence_ids], dtype=np.int64)
    x = model.sent_vecs[rows].astype(np.float64)
    if model.use_proj:
        x = x @ model.proj.astype(np.float64).T + model.bias.astype(np.float64)
    return x


def window_nll_and_grads(
    sent_vec: np.ndarray | None,
    ctx_vecs: np.ndarray,
    path_nodes: np.ndarray,
    code: np.ndarray,
    proj: np.ndarray | None = None,
    bias: np.ndarray | None = None,
):
    """Negative log-probability of one window and its analytic gradients.

    Returns ``(nll, grads)`` where ``grads`` has keys ``sent`` (or None),
    ``ctx`` (one row per context word), ``nodes`` (one row per path node),
    ``proj`` and ``bias`` (None without a projection).
    """
    items = ctx_vecs if sent_vec is None else np.vstack([sent_vec, ctx_vecs])
    cnt = items.shape[0]
    h = items.mean(axis=0)
    z = h if proj is None else bias + proj @ h
    a = path_nodes @ z
    signs = 1.0 - 2.0 * np.asarray(code, dtype=np.float64)
    sa = signs * a
    nll = float(np.sum(np.logaddexp(0.0, -sa)))
    # d nll / d a_k = -sign_k * (1 - sigmoid(sign_k * a_k))
    da = -signs * (1.0 - _sigmoid(sa))
    g_nodes = da[:, None] * z[None, :]
    g_z = path_nodes.T @ da
    if proj is None:
        g_h, g_proj, g_bias = g_z, None, None
    else:
        g_h = proj.T @ g_z
        g_proj = np.outer(g_z, h)
        g_bias = g_z
    g_item = g_h / cnt
    return nll, {
        "sent": None if sent_vec is None else g_item.copy(),
        "ctx": np.tile(g_item, (ctx_vecs.shape[0], 1)),
        "nodes": g_nodes,
        "proj": g_proj,
        "bias": g_bias,
    }
