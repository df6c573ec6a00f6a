"""Command-line entry point for the pipeline stages."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .classify import ClassifierConfig, RelevanceClassifier, TrainingDataError, score_all, train_nag
from .config import ConfigError, PipelineConfig, load_config
from .corpus import CorpusError, CorpusStore, ingest, read_lexicon
from .describe import InferenceSettings, format_excerpts, rank_excerpts, write_excerpts_csv
from .embed import EmbeddingModel, ModelFormatError, TrainConfig, extract_matrix, train_dm
from .embed.vocab import EmptyVocabularyError
from .evaluate import DegenerateDataError, EvalData, evaluate_run
from .labeling import WindowConfig, label_corpus, read_events, read_labels, write_labels
from .signals import Mention, Period, build_indices, read_index_csv, write_index_csv
from .synth import SynthConfig, generate

log = logging.getLogger("newsevents")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MISSING = 0, 1, 2, 3


class MissingPrerequisite(RuntimeError):
    def __init__(self, stage: str, path: Path):
        super().__init__(f"missing {stage} ({path}); run `{_PRODUCER[stage]}` first")


_PRODUCER = {
    "corpus store": "ingest",
    "labels": "label",
    "embedding model": "train-embed",
    "classifier": "train-clf",
    "index": "index",
}


class Run:
    """Resolved configuration plus the artifact layout of one output directory."""

    def __init__(self, cfg: PipelineConfig, base: Path):
        self.cfg = cfg
        self.base = base
        self.out = self.resolve(cfg.out_dir)
        self.models = self.out / cfg.model_dir if not Path(cfg.model_dir).is_absolute() else Path(cfg.model_dir)
        self.inputs: dict[str, Path] = {}
        self.outputs: list[Path] = []

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base / path

    @property
    def store_path(self) -> Path:
        return self.out / "store.jsonl"

    @property
    def labels_path(self) -> Path:
        return self.out / "labels.csv"

    @property
    def embedding_path(self) -> Path:
        return self.models / "embedding.bin"

    @property
    def classifier_path(self) -> Path:
        return self.models / "classifier.bin"

    @property
    def index_path(self) -> Path:
        return self.out / "index.csv"

    def need(self, stage: str, path: Path) -> Path:
        if not path.exists():
            raise MissingPrerequisite(stage, path)
        self.inputs[stage] = path
        return path

    def source(self, name: str) -> Path:
        path = self.resolve(getattr(self.cfg, name))
        if not path.exists():
            raise FileNotFoundError(f"{name} file not found: {path}")
        self.inputs[name] = path
        return path

    def produced(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def write_manifest(self, command: str) -> Path:
        path = self.out / f"{command}.manifest.json"
        rec = {
            "command": command,
            "config": self.cfg.canonical().splitlines(),
            "config_sha256": self.cfg.digest(),
            "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(self.inputs.items())},
            "outputs": {p.name: _sha256(p) for p in self.outputs},
            "versions": {
                "newsevents": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "numba": _numba_version(),
            },
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _numba_version() -> str:
    import numba

    return numba.__version__


def _windows(cfg: PipelineConfig) -> WindowConfig:
    return WindowConfig(tuple(cfg.inner_window), tuple(cfg.outer_window), cfg.coverage_pad)


def _clf_config(cfg: PipelineConfig, dim: int) -> ClassifierConfig:
    return ClassifierConfig(
        input_dim=dim, hidden_units=cfg.hidden, activation=cfg.activation,
        output_form=cfg.output_form, lr=cfg.clf_lr, momentum=cfg.momentum,
        epochs=cfg.clf_epochs, batch_size=cfg.batch_size, seed=cfg.seed,
    )


def _load_store(run: Run) -> CorpusStore:
    return CorpusStore.load(run.need("corpus store", run.store_path))


def _load_embedding(run: Run) -> EmbeddingModel:
    return EmbeddingModel.load(run.need("embedding model", run.embedding_path))


def _labeled_vectors(run: Run, model: EmbeddingModel, store: CorpusStore):
    labels = read_labels(run.need("labels", run.labels_path))
    labels = [i for i in labels if model.has_vector(i.sentence_id)]
    if not labels:
        raise DegenerateDataError("no labeled sentence has a vector")
    x = extract_matrix(model, [i.sentence_id for i in labels])
    y = np.array([i.label for i in labels], dtype=np.int64)
    return labels, x, y


# --- commands --------------------------------------------------------------


def cmd_synth(run: Run, args) -> None:
    cfg = run.cfg
    corpus = generate(SynthConfig(
        n_entities=cfg.synth_entities, intensity=cfg.synth_intensity,
        windows=_windows(cfg), seed=cfg.seed,
    ))
    for path in corpus.write(run.out).values():
        run.produced(path)
    print(f"synthetic corpus: {len(corpus.documents)} documents, {len(corpus.events)} events "
          f"-> {run.out}")


def cmd_ingest(run: Run, args) -> None:
    store, _ = ingest(run.source("corpus"), run.source("lexicon"))
    store.save(run.produced(run.store_path))
    c = store.counts()
    print(f"ingested {c['documents']} documents, {c['sentences']} sentences, "
          f"{c['mention_sentences']} with entity mentions")


def cmd_label(run: Run, args) -> None:
    store = _load_store(run)
    events = read_events(run.source("events"))
    instances, summary = label_corpus(store, events, _windows(run.cfg))
    write_labels(instances, run.produced(run.labels_path))
    print(f"pairs {summary.pairs}: coinciding {summary.coinciding}, non-coinciding "
          f"{summary.non_coinciding}, ambiguous {summary.ambiguous}, out of coverage "
          f"{summary.out_of_coverage}; positive rate {summary.positive_rate:.4f}")


def cmd_train_embed(run: Run, args) -> None:
    cfg = run.cfg
    store = _load_store(run)
    model = train_dm(store, TrainConfig(
        dim=cfg.dim, context_n=cfg.context_n, epochs=cfg.embed_epochs, lr=cfg.embed_lr,
        min_lr=cfg.embed_min_lr, min_count=cfg.min_count, seed=cfg.seed,
        include_word_only_pass=cfg.word_only_pass, use_projection=cfg.use_projection,
        learn_projection=cfg.learn_projection, threads=cfg.threads,
    ))
    model.save(run.produced(run.embedding_path))
    print(f"embedding: {len(model.vocab)} words, {len(model.sentence_ids)} sentence vectors, "
          f"final mean log prob {model.history[-1]:.4f}")


def cmd_train_clf(run: Run, args) -> None:
    cfg = run.cfg
    model = _load_embedding(run)
    store = _load_store(run)
    _, x, y = _labeled_vectors(run, model, store)
    # seeded 80/20 split; the held-out part selects the epoch
    order = np.random.default_rng(cfg.seed).permutation(len(y))
    cut = max(1, int(round(0.8 * len(y))))
    tr, va = order[:cut], order[cut:]
    ccfg = _clf_config(cfg, model.dim)
    clf = train_nag(RelevanceClassifier.initialize(ccfg), x[tr], y[tr], x[va], y[va], ccfg)
    clf.save(run.produced(run.classifier_path))
    best = min(v for _, v in clf.losses)
    print(f"classifier: {len(tr)} training, {len(va)} validation instances, "
          f"best validation loss {best:.5f}")


def cmd_evaluate(run: Run, args) -> None:
    cfg = run.cfg
    model = _load_embedding(run)
    store = _load_store(run)
    labels, x, y = _labeled_vectors(run, model, store)
    data = EvalData(x, y, [i.entity_id for i in labels],
                    [store.sentences[i.sentence_id].date for i in labels])
    reports = evaluate_run(
        data, cfg.strategy, reshuffles=cfg.reshuffles, k=cfg.folds,
        clf_config=_clf_config(cfg, model.dim), mu_grid=cfg.mu_grid, seed=cfg.seed,
        granularity=cfg.period, period_split=cfg.period_split,
    )
    for level, rep in reports.items():
        stem = f"eval_{cfg.strategy}_{level}"
        rep.write(run.produced(run.out / f"{stem}.csv"), run.produced(run.out / f"{stem}.txt"))
        print(rep.to_text())


def cmd_index(run: Run, args) -> None:
    cfg = run.cfg
    model = _load_embedding(run)
    clf = RelevanceClassifier.load(run.need("classifier", run.classifier_path))
    store = _load_store(run)
    lexicon = read_lexicon(run.source("lexicon"))
    scored = [s for s in store.sentences if s.mentions and model.has_vector(s.sentence_id)]
    scores = score_all(clf, model, [s.sentence_id for s in scored])
    mentions = [Mention(s.sentence_id, e, s.date, scores[s.sentence_id])
                for s in scored for e in sorted(s.mentions)]
    span = None
    if (path := run.resolve(cfg.events)).exists():
        events = read_events(path)
        run.inputs["events"] = path
        if events:
            dates = [e.event_date for e in events]
            span = (min(dates), max(dates))
    series = build_indices(mentions, lexicon.group_members(), cfg.period, cfg.percentile_step,
                           cfg.group_mode, span)
    write_index_csv(series, run.produced(run.index_path), cfg.percentile_step)
    print(f"index: {len(series)} series over {len(mentions)} mentions -> {run.index_path}")


def peak_period(index_path: Path) -> Period:
    """Period with the highest global index; earliest wins ties."""
    glob = [s for s in read_index_csv(index_path) if s.scope == "global"]
    if not glob or not glob[0].points:
        raise DegenerateDataError("index has no global series")
    pts = glob[0].points
    return max(sorted(pts), key=lambda p: pts[p].value)


def cmd_describe(run: Run, args) -> None:
    cfg = run.cfg
    model = _load_embedding(run)
    clf = RelevanceClassifier.load(run.need("classifier", run.classifier_path))
    store = _load_store(run)
    if args.period:
        period = Period.parse(args.period)
    else:
        period = peak_period(run.need("index", run.index_path))
    entities = args.entities.split(",") if args.entities else None
    settings = InferenceSettings(cfg.infer_samples, cfg.infer_steps, cfg.inference_lr,
                                 cfg.embed_min_lr, cfg.seed)
    excerpts = rank_excerpts(clf, model, store, period, entities, cfg.top_k, settings)
    write_excerpts_csv(excerpts, run.produced(run.out / "excerpts.csv"))
    text = format_excerpts(excerpts)
    run.produced(run.out / "excerpts.txt").write_text(text, encoding="utf-8")
    print(f"period {period}: {len(excerpts)} excerpts")
    print(text, end="")


COMMANDS: dict[str, tuple[Callable, str]] = {
    "synth": (cmd_synth, "generate a synthetic corpus, lexicon, events and manifest"),
    "ingest": (cmd_ingest, "split, tokenize and tag the corpus"),
    "label": (cmd_label, "label (sentence, entity) pairs from the event list"),
    "train-embed": (cmd_train_embed, "train sentence and word vectors"),
    "train-clf": (cmd_train_clf, "train the relevance classifier"),
    "evaluate": (cmd_evaluate, "cross-validated usefulness and AUC"),
    "index": (cmd_index, "entity, group and global relevance indices"),
    "describe": (cmd_describe, "top relevant excerpts for a period"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsevents", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--threads", type=int, help="worker threads for embedding training")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "describe":
            p.add_argument("--period", help="e.g. 2008-09, 2008-Q3 or 2008-W05")
            p.add_argument("--entities", help="comma-separated entity ids")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {k: v for k, v in (("seed", args.seed), ("out_dir", args.out),
                                       ("threads", args.threads)) if v is not None}
        cfg = replace(cfg, **overrides)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    base = Path(args.config).resolve().parent if args.config else Path.cwd()
    if args.out:
        cfg = replace(cfg, out_dir=str(Path(args.out).resolve()))
    run = Run(cfg, base)
    handler = COMMANDS[args.command][0]
    try:
        handler(run, args)
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (CorpusError, DegenerateDataError, TrainingDataError, EmptyVocabularyError,
            ModelFormatError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    run.write_manifest(args.command)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
