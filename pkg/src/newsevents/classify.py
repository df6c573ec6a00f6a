"""Feed-forward relevance classifier trained with Nesterov momentum."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embed.model import EmbeddingModel, ModelFormatError, extract_matrix

log = logging.getLogger(__name__)

MAGIC = b"NEVCLF\x00\x00"
FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "logistic", "tanh")
OUTPUT_FORMS = ("linear", "squashed")
PARAMS = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class ClassifierConfig:
    input_dim: int = 600
    hidden_units: int = 50
    activation: str = "relu"
    output_form: str = "linear"
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.output_form not in OUTPUT_FORMS:
            raise ValueError(f"output_form must be one of {OUTPUT_FORMS}")


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "logistic":
        return 0.5 * (1.0 + np.tanh(0.5 * x))
    return np.tanh(x)


def _act_grad(name: str, x: np.ndarray, fx: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0).astype(x.dtype)
    if name == "logistic":
        return fx * (1.0 - fx)
    return 1.0 - fx * fx


def softmax2(y: np.ndarray) -> np.ndarray:
    y = y - y.max(axis=-1, keepdims=True)
    e = np.exp(y)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class RelevanceClassifier:
    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (2, hidden)
    b2: np.ndarray  # (2,)
    activation: str = "relu"
    output_form: str = "linear"
    losses: list[tuple[float, float]] = field(default_factory=list, repr=False)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def initialize(cls, config: ClassifierConfig) -> "RelevanceClassifier":
        rng = np.random.default_rng(config.seed)
        r1 = 1.0 / np.sqrt(config.input_dim)
        r2 = 1.0 / np.sqrt(config.hidden_units)
        return cls(
            w1=rng.uniform(-r1, r1, (config.hidden_units, config.input_dim)),
            b1=rng.uniform(-r1, r1, config.hidden_units),
            w2=rng.uniform(-r2, r2, (2, config.hidden_units)),
            b2=rng.uniform(-r2, r2, 2),
            activation=config.activation,
            output_form=config.output_form,
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_units: int, **kw) -> "RelevanceClassifier":
        return cls(
            np.zeros((hidden_units, input_dim)), np.zeros(hidden_units),
            np.zeros((2, hidden_units)), np.zeros(2), **kw,
        )

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAMS}

    def with_params(self, params: Mapping[str, np.ndarray]) -> "RelevanceClassifier":
        return replace(self, **{k: params[k] for k in PARAMS}, losses=list(self.losses))

    def logits(self, x: np.ndarray) -> np.ndarray:
        a1 = _act(self.activation, x @ self.w1.T + self.b1)
        y = a1 @ self.w2.T + self.b2
        return _act(self.activation, y) if self.output_form == "squashed" else y

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Posterior ``(p0, p1)`` rows for a batch of sentence vectors."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected vectors of length {self.input_dim}, got {x.shape[1]}")
        return softmax2(self.logits(x))

    # --- persistence -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack(
                "<IIIBB", FORMAT_VERSION, self.input_dim, self.hidden_units,
                ACTIVATIONS.index(self.activation), OUTPUT_FORMS.index(self.output_form),
            ))
            for k in PARAMS:
                fh.write(np.ascontiguousarray(getattr(self, k), dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "RelevanceClassifier":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ModelFormatError("not a classifier file")
            head = fh.read(struct.calcsize("<IIIBB"))
            version, n_in, n_hid, act, form = struct.unpack("<IIIBB", head)
            if version != FORMAT_VERSION:
                raise ModelFormatError(f"unsupported format version {version}")
            shapes = {"w1": (n_hid, n_in), "b1": (n_hid,), "w2": (2, n_hid), "b2": (2,)}
            arrays = {}
            for k in PARAMS:
                n = int(np.prod(shapes[k]))
                buf = fh.read(4 * n)
                if len(buf) != 4 * n:
                    raise ModelFormatError("truncated classifier file")
                arrays[k] = np.frombuffer(buf, dtype="<f4").reshape(shapes[k]).astype(np.float64)
        return cls(**arrays, activation=ACTIVATIONS[act], output_form=OUTPUT_FORMS[form])


def forward(clf: RelevanceClassifier, v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != clf.input_dim:
        raise ValueError(f"expected a vector of length {clf.input_dim}")
    p = clf.predict_proba(v[None, :])[0]
    return float(p[0]), float(p[1])


def loss_and_grads(clf: RelevanceClassifier, x: np.ndarray, y: np.ndarray,
                   params: Mapping[str, np.ndarray] | None = None):
    """Mean cross-entropy over the batch and its gradients w.r.t. each parameter."""
    p = clf.params() if params is None else params
    act = clf.activation
    pre1 = x @ p["w1"].T + p["b1"]
    a1 = _act(act, pre1)
    pre2 = a1 @ p["w2"].T + p["b2"]
    logits = _act(act, pre2) if clf.output_form == "squashed" else pre2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    n = x.shape[0]
    yi = y.astype(np.int64)
    loss = float(np.mean(log_norm - shifted[np.arange(n), yi]))

    g_logits = np.exp(shifted - log_norm[:, None])
    g_logits[np.arange(n), yi] -= 1.0
    g_logits /= n
    g_pre2 = g_logits * _act_grad(act, pre2, logits) if clf.output_form == "squashed" else g_logits
    g_w2 = g_pre2.T @ a1
    g_b2 = g_pre2.sum(axis=0)
    g_pre1 = (g_pre2 @ p["w2"]) * _act_grad(act, pre1, a1)
    g_w1 = g_pre1.T @ x
    g_b1 = g_pre1.sum(axis=0)
    return loss, {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}


def mean_loss(clf: RelevanceClassifier, x: np.ndarray, y: np.ndarray) -> float:
    p = clf.predict_proba(x)
    py = p[np.arange(len(y)), y.astype(np.int64)]
    return float(-np.mean(np.log(np.maximum(py, 1e-300))))


def nag_step(params, velocity, grad_fn, lr: float, momentum: float):
    """One Nesterov update: gradient taken at the look-ahead point."""
    ahead = {k: params[k] + momentum * velocity[k] for k in params}
    loss, grads = grad_fn(ahead)
    new_v = {k: momentum * velocity[k] - lr * grads[k] for k in params}
    new_p = {k: params[k] + new_v[k] for k in params}
    return new_p, new_v, loss


class TrainingDataError(ValueError):
    pass


def train_nag(
    clf: RelevanceClassifier,
    train_x: np.ndarray,
    train_y: np.ndarray,
    valid_x: np.ndarray | None = None,
    valid_y: np.ndarray | None = None,
    config: ClassifierConfig = ClassifierConfig(),
) -> RelevanceClassifier:
    """Mini-batch NAG on cross-entropy; keeps the epoch with lowest validation loss.

    Without a validation set the training loss picks the epoch. The returned
    classifier carries ``losses`` as ``(train_loss, valid_loss)`` per epoch,
    the first entry being the initial state, and its parameters are rounded
    to float32 so they survive a save/load cycle unchanged.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    if len(train_y) == 0:
        raise TrainingDataError("empty training set")
    if len(np.unique(train_y)) < 2:
        raise TrainingDataError("training set contains a single class")
    if valid_x is None or len(valid_x) == 0:
        valid_x, valid_y = train_x, train_y
    valid_x = np.asarray(valid_x, dtype=np.float64)
    valid_y = np.asarray(valid_y, dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    params = {k: v.copy() for k, v in clf.params().items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def evaluate(ps):
        c = clf.with_params(ps)
        return mean_loss(c, train_x, train_y), mean_loss(c, valid_x, valid_y)

    losses = [evaluate(params)]
    best = (losses[0][1], {k: v.copy() for k, v in params.items()})
    n = len(train_y)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = train_x[idx], train_y[idx]
            params, velocity, _ = nag_step(
                params, velocity, lambda ps: loss_and_grads(clf, xb, yb, ps),
                config.lr, config.momentum,
            )
        losses.append(evaluate(params))
        if losses[-1][1] < best[0]:
            best = (losses[-1][1], {k: v.copy() for k, v in params.items()})
        log.debug("epoch %d train %.5f valid %.5f", epoch + 1, *losses[-1])
    out = clf.with_params({k: v.astype(np.float32).astype(np.float64) for k, v in best[1].items()})
    out.losses = losses
    return out


def score_all(clf: RelevanceClassifier, model: EmbeddingModel,
              sentence_ids: Sequence[int]) -> dict[int, float]:
    """Posterior relevance ``M(V_s)`` for each trained sentence."""
    ids = list(sentence_ids)
    if not ids:
        return {}
    p1 = clf.predict_proba(extract_matrix(model, ids))[:, 1]
    return {int(s): float(p) for s, p in zip(ids, p1)}
