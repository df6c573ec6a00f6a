"""Usefulness-based evaluation, thresholds, ROC AUC and cross-validation."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .classify import ClassifierConfig, RelevanceClassifier, train_nag
from .signals import period_of

log = logging.getLogger(__name__)

MU_GRID = (0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 0.85, 0.875, 0.9, 0.925, 0.95)


class DegenerateDataError(ValueError):
    """Raised when a metric is undefined for single-class data."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: float
    fn: float
    fp: float
    tp: float

    @property
    def total(self) -> float:
        return self.tn + self.fn + self.fp + self.tp

    @classmethod
    def from_predictions(cls, labels, preds) -> "ConfusionMatrix":
        labels = np.asarray(labels).astype(bool)
        preds = np.asarray(preds).astype(bool)
        return cls(
            tn=int(np.sum(~labels & ~preds)),
            fn=int(np.sum(labels & ~preds)),
            fp=int(np.sum(~labels & preds)),
            tp=int(np.sum(labels & preds)),
        )


class Usefulness(NamedTuple):
    baseline_loss: float
    model_loss: float
    absolute: float
    relative: float


def usefulness(cm: ConfusionMatrix, mu: float) -> Usefulness:
    """Preference-weighted loss of the model against the best naive guess."""
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    n = cm.total
    if n <= 0:
        raise DegenerateDataError("empty confusion matrix")
    p1 = (cm.tp + cm.fn) / n
    p0 = (cm.tn + cm.fp) / n
    lb = min(mu * p1, (1.0 - mu) * p0)
    # rates first, so a constant predictor's loss equals a baseline term exactly
    lm = mu * (cm.fn / n) + (1.0 - mu) * (cm.fp / n)
    if lb == 0.0:
        raise DegenerateDataError("baseline loss is zero; relative usefulness undefined")
    ua = lb - lm
    return Usefulness(lb, lm, ua, ua / lb)


def f_beta(cm: ConfusionMatrix, beta: float) -> float:
    if cm.tp == 0:
        return 0.0
    precision = cm.tp / (cm.tp + cm.fp)
    recall = cm.tp / (cm.tp + cm.fn)
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def mu_to_beta(mu: float) -> float:
    return mu / (1.0 - mu)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("ROC AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    sorted_s = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    # average 1-based ranks within tie blocks
    bounds = np.flatnonzero(np.diff(sorted_s)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(scores)]])
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = (a + 1 + b) / 2.0
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def threshold_candidates(scores) -> np.ndarray:
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([[0.0, 1.0], mids]))


def usefulness_curve(scores, labels, mu: float, thresholds: np.ndarray) -> np.ndarray:
    """Relative usefulness of ``score >= t`` for every threshold ``t``."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n = len(scores)
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    tp = len(pos) - np.searchsorted(pos, thresholds, side="left")
    fp = len(neg) - np.searchsorted(neg, thresholds, side="left")
    fn = len(pos) - tp
    lb = min(mu * len(pos) / n, (1.0 - mu) * len(neg) / n)
    if lb == 0.0:
        raise DegenerateDataError("single-class data")
    lm = mu * (fn / n) + (1.0 - mu) * (fp / n)
    return (lb - lm) / lb


def optimize_threshold(valid_scores, valid_labels, mu: float) -> float:
    """Threshold maximising relative usefulness; ties go to the smallest."""
    labels = np.asarray(valid_labels).astype(bool)
    if labels.all() or not labels.any():
        raise DegenerateDataError("threshold selection needs both classes")
    cands = threshold_candidates(valid_scores)
    ur = usefulness_curve(valid_scores, labels, mu, cands)
    return float(cands[int(np.argmax(ur))])


# --- folds ---------------------------------------------------------------------


def make_folds(
    entities: Sequence[str],
    strategy: str,
    k: int,
    seed: int,
    dates: Sequence[dt.date] | None = None,
    period_split: bool = False,
    split_factor: float = 2.0,
) -> np.ndarray:
    """Fold index per instance.

    ``random`` deals shuffled instances round-robin. ``entity`` keeps each
    entity's instances in one fold, placing entities largest first into the
    currently smallest fold. With ``period_split``, an entity holding more
    than ``split_factor * n / k`` instances is cut at its median date; the
    older half goes to the smallest fold and the newer half to the next
    fold, which is the test fold whenever the older half's fold validates.
    """
    if k < 3:
        raise ValueError("need at least 3 folds (train, validation, test)")
    n = len(entities)
    rng = np.random.default_rng(seed)
    if strategy == "random":
        folds = np.empty(n, dtype=np.int64)
        folds[rng.permutation(n)] = np.arange(n) % k
        return folds
    if strategy != "entity":
        raise ValueError(f"unknown sampling strategy {strategy!r}")

    members: dict[str, list[int]] = defaultdict(list)
    for i, e in enumerate(entities):
        members[e].append(i)
    if len(members) < k:
        raise ValueError(f"{len(members)} entities cannot fill {k} folds")
    names = sorted(members)
    names = [names[i] for i in rng.permutation(len(names))]
    names.sort(key=lambda e: -len(members[e]))  # stable: shuffled order breaks ties
    # cyclic shift keeps split halves in consecutive folds
    shift = int(rng.integers(k))

    load = np.zeros(k, dtype=np.int64)
    folds = np.empty(n, dtype=np.int64)
    limit = split_factor * n / k
    for e in names:
        idx = members[e]
        f = int(np.argmin(load))
        if period_split and len(idx) > limit:
            if dates is None:
                raise ValueError("period_split needs instance dates")
            idx = sorted(idx, key=lambda i: (dates[i], i))
            half = len(idx) // 2
            older, newer = idx[:half], idx[half:]
            folds[older] = f
            folds[newer] = (f + 1) % k
            load[f] += len(older)
            load[(f + 1) % k] += len(newer)
            continue
        folds[idx] = f
        load[f] += len(idx)
    return (folds + shift) % k


def fold_roles(k: int, rotation: int) -> tuple[int, int]:
    """(validation fold, test fold) for one rotation."""
    return rotation, (rotation + 1) % k


# --- end-to-end evaluation ------------------------------------------------------


@dataclass
class EvalData:
    """Labeled instances joined with their sentence vectors."""

    vectors: np.ndarray
    labels: np.ndarray
    entities: list[str]
    dates: list[dt.date]


@dataclass
class MuRow:
    mu: float
    mean_ur: float
    std_ur: float
    mean_fbeta: float
    std_fbeta: float
    mean_cm: tuple[float, float, float, float]
    threshold_mean: float


@dataclass
class EvalReport:
    strategy: str
    level: str
    rows: list[MuRow]
    auc_mean: float
    auc_std: float
    runs: int
    aucs: list[float] = field(default_factory=list)

    def row(self, mu: float) -> MuRow:
        for r in self.rows:
            if math.isclose(r.mu, mu):
                return r
        raise KeyError(mu)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mu", "mean_Ur", "std_Ur", "mean_Fbeta", "mean_TN", "mean_FN",
                    "mean_FP", "mean_TP", "threshold_mean"])
        for r in self.rows:
            w.writerow([_fmt(r.mu), _fmt(r.mean_ur), _fmt(r.std_ur), _fmt(r.mean_fbeta),
                        *(_fmt(c) for c in r.mean_cm), _fmt(r.threshold_mean)])
        return buf.getvalue()

    def to_text(self) -> str:
        title = f"{self.strategy} sampling, {self.level} level ({self.runs} runs)"
        lines = [title, f"AUC {self.auc_mean:.3f} (sd {self.auc_std:.3f})", ""]
        lines.append(f"{'mu':>6} {'Ur':>7} {'sd_U':>6} {'Fbeta':>6} {'sd_F':>6} "
                     f"{'TN':>8} {'FN':>8} {'FP':>8} {'TP':>8} {'t':>6}")
        for r in self.rows:
            tn, fn, fp, tp = r.mean_cm
            lines.append(f"{r.mu:>6.3f} {r.mean_ur:>7.3f} {r.std_ur:>6.3f} {r.mean_fbeta:>6.3f} "
                         f"{r.std_fbeta:>6.3f} {tn:>8.1f} {fn:>8.1f} {fp:>8.1f} {tp:>8.1f} "
                         f"{r.threshold_mean:>6.3f}")
        return "\n".join(lines) + "\n"

    def write(self, csv_path: str | Path, text_path: str | Path | None = None) -> None:
        Path(csv_path).write_text(self.to_csv(), encoding="utf-8")
        if text_path is not None:
            Path(text_path).write_text(self.to_text(), encoding="utf-8")


def _fmt(x: float) -> str:
    return "nan" if x != x else f"{x:.6f}"


def aggregate_cells(scores, labels, entities, dates, granularity: str = "month"):
    """Entity-period observations: mean score and whether any instance is positive."""
    cells: dict[tuple, list[int]] = defaultdict(list)
    for i, (e, d) in enumerate(zip(entities, dates)):
        cells[(e, period_of(d, granularity))].append(i)
    keys = sorted(cells)
    s = np.array([np.mean(scores[cells[c]]) for c in keys])
    y = np.array([bool(np.any(labels[cells[c]])) for c in keys])
    return s, y


@dataclass
class _Outcome:
    auc: float
    per_mu: dict[float, tuple[float, float, ConfusionMatrix, float]]


def _assess(valid_s, valid_y, test_s, test_y, mu_grid) -> _Outcome:
    try:
        auc = roc_auc(test_s, test_y)
    except DegenerateDataError:
        auc = float("nan")
    per_mu = {}
    for mu in mu_grid:
        try:
            t = optimize_threshold(valid_s, valid_y, mu)
        except DegenerateDataError:
            t = 0.5
        cm = ConfusionMatrix.from_predictions(test_y, test_s >= t)
        try:
            ur = usefulness(cm, mu).relative
        except DegenerateDataError:
            ur = float("nan")
        per_mu[mu] = (ur, f_beta(cm, mu_to_beta(mu)), cm, t)
    return _Outcome(auc, per_mu)


def _nanstats(xs) -> tuple[float, float]:
    arr = np.asarray(xs, dtype=np.float64)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std())


def _report(strategy: str, level: str, outcomes: list[_Outcome], mu_grid) -> EvalReport:
    rows = []
    for mu in mu_grid:
        urs = [o.per_mu[mu][0] for o in outcomes]
        fbs = [o.per_mu[mu][1] for o in outcomes]
        cms = [o.per_mu[mu][2] for o in outcomes]
        ts = [o.per_mu[mu][3] for o in outcomes]
        mean_ur, std_ur = _nanstats(urs)
        mean_fb, std_fb = _nanstats(fbs)
        mean_cm = tuple(float(np.mean([getattr(c, a) for c in cms])) for a in ("tn", "fn", "fp", "tp"))
        rows.append(MuRow(mu, mean_ur, std_ur, mean_fb, std_fb, mean_cm, float(np.mean(ts))))
    aucs = [o.auc for o in outcomes]
    auc_mean, auc_std = _nanstats(aucs)
    return EvalReport(strategy, level, rows, auc_mean, auc_std, len(outcomes), aucs)


def evaluate_run(
    data: EvalData,
    strategy: str = "random",
    levels: Sequence[str] = ("vector", "aggregated"),
    reshuffles: int = 5,
    k: int = 5,
    clf_config: ClassifierConfig | None = None,
    mu_grid: Sequence[float] = MU_GRID,
    seed: int = 0,
    granularity: str = "month",
    period_split: bool = False,
    progress: Callable[[str], None] | None = None,
) -> dict[str, EvalReport]:
    """Cross-validated usefulness and AUC at the requested levels.

    Each reshuffle draws new folds; each of the ``k`` rotations trains on
    ``k - 2`` folds, picks the epoch and per-mu thresholds on the validation
    fold and scores the test fold. Vector and aggregated levels share the
    trained classifiers.
    """
    for lv in levels:
        if lv not in ("vector", "aggregated"):
            raise ValueError(f"unknown evaluation level {lv!r}")
    x = np.asarray(data.vectors, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.int64)
    if clf_config is None:
        clf_config = ClassifierConfig(input_dim=x.shape[1])
    outcomes: dict[str, list[_Outcome]] = {lv: [] for lv in levels}
    for r in range(reshuffles):
        folds = make_folds(data.entities, strategy, k, seed + 1000 * r, data.dates, period_split)
        for rot in range(k):
            vf, tf = fold_roles(k, rot)
            tr = (folds != vf) & (folds != tf)
            va, te = folds == vf, folds == tf
            if len(np.unique(y[tr])) < 2:
                log.warning("reshuffle %d rotation %d: single-class training folds, skipped", r, rot)
                continue
            cfg = replace(clf_config, seed=clf_config.seed + 100 * r + rot)
            clf = train_nag(RelevanceClassifier.initialize(cfg), x[tr], y[tr], x[va], y[va], cfg)
            p_va = clf.predict_proba(x[va])[:, 1]
            p_te = clf.predict_proba(x[te])[:, 1]
            if "vector" in levels:
                outcomes["vector"].append(_assess(p_va, y[va], p_te, y[te], mu_grid))
            if "aggregated" in levels:
                ents = np.asarray(data.entities, dtype=object)
                dts = np.asarray(data.dates, dtype=object)
                vs, vy = aggregate_cells(p_va, y[va], ents[va], dts[va], granularity)
                ts, ty = aggregate_cells(p_te, y[te], ents[te], dts[te], granularity)
                outcomes["aggregated"].append(_assess(vs, vy, ts, ty, mu_grid))
            if progress is not None:
                progress(f"reshuffle {r + 1}/{reshuffles}, rotation {rot + 1}/{k}")
    return {lv: _report(strategy, lv, outcomes[lv], mu_grid) for lv in levels}
