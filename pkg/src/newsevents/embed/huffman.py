"""Binary Huffman coding of the vocabulary for the hierarchical softmax."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class HuffmanTree:
    """Per-word root-to-leaf codes and internal-node paths.

    ``codes[w, :lengths[w]]`` holds the branch bits and ``points[w, :lengths[w]]``
    the matching internal-node indices (rows of the output matrix, ``0`` is
    the root). Internal nodes number ``len(lengths) - 1``.
    """

    codes: np.ndarray  # int8, (V, max_len)
    points: np.ndarray  # int32, (V, max_len)
    lengths: np.ndarray  # int32, (V,)

    @property
    def n_words(self) -> int:
        return len(self.lengths)

    @property
    def n_internal(self) -> int:
        return self.n_words - 1

    def code(self, w: int) -> tuple[int, ...]:
        return tuple(int(b) for b in self.codes[w, : self.lengths[w]])

    def path(self, w: int) -> tuple[int, ...]:
        return tuple(int(p) for p in self.points[w, : self.lengths[w]])


def build_huffman(counts: Sequence[int]) -> HuffmanTree:
    """Huffman tree over word frequencies.

    Merges always take the two lowest (frequency, node id) pairs, so equal
    frequencies resolve toward the lowest node id. Leaves are ``0..V-1`` and
    merged nodes are numbered upward from ``V`` in creation order.
    """
    v = len(counts)
    if v < 2:
        raise ValueError("Huffman coding needs at least two words")
    heap = [(int(c), i) for i, c in enumerate(counts)]
    heapq.heapify(heap)
    parent = np.zeros(2 * v - 1, dtype=np.int64)
    bit = np.zeros(2 * v - 1, dtype=np.int8)
    next_id = v
    while len(heap) > 1:
        f0, a = heapq.heappop(heap)
        f1, b = heapq.heappop(heap)
        parent[a], bit[a] = next_id, 0
        parent[b], bit[b] = next_id, 1
        heapq.heappush(heap, (f0 + f1, next_id))
        next_id += 1
    root = 2 * v - 2

    paths = []
    for w in range(v):
        code, pts = [], []
        node = w
        while node != root:
            code.append(bit[node])
            node = parent[node]
            # output rows are numbered from the root downward
            pts.append(root - node)
        paths.append((code[::-1], pts[::-1]))

    max_len = max(len(c) for c, _ in paths)
    codes = np.zeros((v, max_len), dtype=np.int8)
    points = np.zeros((v, max_len), dtype=np.int32)
    lengths = np.zeros(v, dtype=np.int32)
    for w, (c, p) in enumerate(paths):
        lengths[w] = len(c)
        codes[w, : len(c)] = c
        points[w, : len(p)] = p
    return HuffmanTree(codes, points, lengths)
