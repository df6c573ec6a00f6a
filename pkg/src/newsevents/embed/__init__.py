"""Distributed-memory sentence vectors with a Huffman-coded hierarchical softmax."""

from .huffman import HuffmanTree, build_huffman
from .model import (
    EmbeddingModel,
    ModelFormatError,
    extract_matrix,
    extract_vector,
    hs_prob,
    window_nll_and_grads,
)
from .train import TrainConfig, infer_vector, infer_vectors, mean_log_prob, pack_store, train_dm
from .vocab import EmptyVocabularyError, Vocabulary, build_vocab

__all__ = [
    "EmbeddingModel",
    "EmptyVocabularyError",
    "HuffmanTree",
    "ModelFormatError",
    "TrainConfig",
    "Vocabulary",
    "build_huffman",
    "build_vocab",
    "extract_matrix",
    "extract_vector",
    "hs_prob",
    "infer_vector",
    "infer_vectors",
    "mean_log_prob",
    "pack_store",
    "train_dm",
    "window_nll_and_grads",
]
