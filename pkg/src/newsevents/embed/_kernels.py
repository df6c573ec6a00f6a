"""Compiled inner loops for distributed-memory training and inference.

Arrays may be float32 (training) or float64 (gradient checks); numba
specialises per dtype. All accumulation happens in float64 scalars.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def run_windows(
    tokens,
    offsets,
    rows,
    order,
    epochs,
    word_vecs,
    sent_vecs,
    node_vecs,
    proj,
    bias,
    use_proj,
    learn_proj,
    learn_words,
    learn_nodes,
    codes,
    points,
    code_lens,
    context_n,
    lr_start,
    lr_end,
    done_start,
    total,
):
    """One SGD pass per epoch over the sentences listed in ``order``.

    Sentence ``i`` owns ``tokens[offsets[i]:offsets[i+1]]`` (word ids) and
    sentence-vector row ``rows[i]``; ``rows[i] < 0`` trains words only.
    Each window averages the sentence vector with ``context_n`` preceding
    words, projects it, and ascends ``log p(next word)`` under the
    hierarchical softmax. Returns (sum of log-probabilities, window count),
    both summed over all epochs.
    """
    dim = word_vecs.shape[1]
    h = np.zeros(dim)
    z = np.zeros(dim)
    dz = np.zeros(dim)
    dh = np.zeros(dim)
    logp_sum = 0.0
    n_windows = 0
    done = done_start
    for _ in range(epochs):
        for oi in range(order.shape[0]):
            si = order[oi]
            lr = lr_start - (lr_start - lr_end) * (done / total)
            done += 1
            start = offsets[si]
            stop = offsets[si + 1]
            row = rows[si]
            cnt = context_n + 1 if row >= 0 else context_n
            for pos in range(start + context_n, stop):
                target = tokens[pos]
                for d in range(dim):
                    acc = sent_vecs[row, d] if row >= 0 else 0.0
                    for j in range(pos - context_n, pos):
                        acc += word_vecs[tokens[j], d]
                    h[d] = acc / cnt
                if use_proj:
                    for d in range(dim):
                        acc = bias[d]
                        for e in range(dim):
                            acc += proj[d, e] * h[e]
                        z[d] = acc
                else:
                    for d in range(dim):
                        z[d] = h[d]
                for d in range(dim):
                    dz[d] = 0.0
                for k in range(code_lens[target]):
                    node = points[target, k]
                    a = 0.0
                    for d in range(dim):
                        a += node_vecs[node, d] * z[d]
                    bit = codes[target, k]
                    logp_sum += _log_sigmoid(-a if bit else a)
                    g = 1.0 - bit - _sigmoid(a)
                    for d in range(dim):
                        dz[d] += g * node_vecs[node, d]
                    if learn_nodes:
                        for d in range(dim):
                            node_vecs[node, d] += lr * g * z[d]
                if use_proj:
                    for e in range(dim):
                        acc = 0.0
                        for d in range(dim):
                            acc += proj[d, e] * dz[d]
                        dh[e] = acc
                    if learn_proj:
                        for d in range(dim):
                            bias[d] += lr * dz[d]
                            for e in range(dim):
                                proj[d, e] += lr * dz[d] * h[e]
                else:
                    for d in range(dim):
                        dh[d] = dz[d]
                scale = lr / cnt
                if row >= 0:
                    for d in range(dim):
                        sent_vecs[row, d] += scale * dh[d]
                if learn_words:
                    for j in range(pos - context_n, pos):
                        w = tokens[j]
                        for d in range(dim):
                            word_vecs[w, d] += scale * dh[d]
                n_windows += 1
    return logp_sum, n_windows


@njit(cache=True, nogil=True)
def score_windows(
    tokens, offsets, rows, word_vecs, sent_vecs, node_vecs, proj, bias, use_proj,
    codes, points, code_lens, context_n,
):
    """Sum of log-probabilities over all windows, without updating anything."""
    dim = word_vecs.shape[1]
    h = np.zeros(dim)
    z = np.zeros(dim)
    total = 0.0
    n_windows = 0
    for si in range(offsets.shape[0] - 1):
        row = rows[si]
        cnt = context_n + 1 if row >= 0 else context_n
        for pos in range(offsets[si] + context_n, offsets[si + 1]):
            target = tokens[pos]
            for d in range(dim):
                acc = sent_vecs[row, d] if row >= 0 else 0.0
                for j in range(pos - context_n, pos):
                    acc += word_vecs[tokens[j], d]
                h[d] = acc / cnt
            for d in range(dim):
                if use_proj:
                    acc = bias[d]
                    for e in range(dim):
                        acc += proj[d, e] * h[e]
                    z[d] = acc
                else:
                    z[d] = h[d]
            for k in range(code_lens[target]):
                node = points[target, k]
                a = 0.0
                for d in range(dim):
                    a += node_vecs[node, d] * z[d]
                total += _log_sigmoid(-a if codes[target, k] else a)
            n_windows += 1
    return total, n_windows
