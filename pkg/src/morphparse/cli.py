"""Command-line entry point: ``morphparse --mode {train,predict,eval} ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .archive import ModelArchive
from .autodiff import set_default_dtype
from .conllu import ConlluError, read_conllu, read_input, write_conllu
from .evaluator import EvaluationError, evaluate
from .extractors import FEATURE_ORDER, TARGETS, FeatureConfigError, TokenVectors, WordVectors
from .model import ModelConfig
from .trainer import EpochRecord, TrainConfig, TrainingError, lr_halvings, train
from .vectoriser import EMBEDDING_NAMES, EmbeddingError, available_embeddings, export_embeddings

logger = logging.getLogger("morphparse")


class CliError(Exception):
    pass


def _csv(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morphparse", description="Joint tagger, lemmatiser and dependency parser.")
    p.add_argument("--mode", required=True, choices=["train", "predict", "eval"])
    p.add_argument("--training_data", help="CoNLL-U (or .conll/.conllx) training file")
    p.add_argument("--validation_data", help="validation file used for model selection")
    p.add_argument("--model_path", help="model archive to write (train) or read (predict)")
    p.add_argument("--input_file", help="input for predict; system output for eval")
    p.add_argument("--output_file", help="predicted CoNLL-U output")
    p.add_argument("--gold_file", help="gold CoNLL-U file for eval")
    p.add_argument("--features", help=f"comma-separated input features from {','.join(FEATURE_ORDER)}")
    p.add_argument("--targets", help=f"comma-separated prediction targets from {','.join(TARGETS)}")
    p.add_argument("--embeddings_file", help="external word vectors (text, optional 'count dim' header)")
    p.add_argument("--token_vectors_file", help="pre-computed per-token vectors for the word feature")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch_size", type=int, default=32)
    p.add_argument("--max_epochs", type=int, default=400)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--workers", type=int, default=1, help="prediction threads")
    p.add_argument("--export_embeddings", help="write upostag/deprel embeddings to this file")
    p.add_argument("--embeddings_format", choices=["text", "binary"], help="defaults to binary for .bin files")
    p.add_argument("--embedding_names", default=",".join(EMBEDDING_NAMES))
    p.add_argument("--report_dir", help="write TSV tables and PNG figures here")
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    p.add_argument("--lenient", action="store_true", help="skip malformed sentences instead of aborting")
    return p


def _require(args, *names: str) -> None:
    missing = [f"--{n}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise CliError(f"--mode {args.mode} requires {', '.join(missing)}")


def _readable(path: str) -> str:
    if not Path(path).is_file():
        raise CliError(f"cannot read {path}")
    return path


def _report_dir(args) -> Optional[Path]:
    if not args.report_dir:
        return None
    d = Path(args.report_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    _require(args, "training_data", "model_path")
    train_tb = read_conllu(_readable(args.training_data), strict=not args.lenient)
    valid_tb = read_conllu(_readable(args.validation_data), strict=not args.lenient) if args.validation_data else None
    vectors = WordVectors.load(_readable(args.embeddings_file)) if args.embeddings_file else None
    if args.token_vectors_file:
        raise CliError("--token_vectors_file is only supported for prediction; train with --embeddings_file")
    features = _csv(args.features)
    if features is None:
        features = ["char"] + (["word"] if vectors is not None else [])
    targets = _csv(args.targets) or list(TARGETS)
    model_config = ModelConfig(features=features, targets=targets)
    train_config = TrainConfig(batch_size=args.batch_size, seed=args.seed, max_epochs=args.max_epochs,
                               patience=args.patience)
    print("epoch\tloss\tscore\tlr\tseconds", flush=True)

    def on_epoch(r: EpochRecord) -> None:
        metrics = " ".join(f"{k}={v:.2f}" for k, v in r.metrics.items())
        print(f"{r.epoch}\t{r.loss:.4f}\t{r.score:.2f}\t{r.lr:g}\t{r.seconds:.1f}\t{metrics}", flush=True)

    model, trainer = train(train_tb, valid_tb, model_config, train_config, vectors=vectors, on_epoch=on_epoch)
    metadata = {
        "best_epoch": trainer.state.best_epoch,
        "best_score": trainer.state.best_score,
        "epochs": trainer.state.epoch,
        "lr_history": trainer.state.lr_history,
        "lr_halvings": lr_halvings(trainer.state.lr_history),
        "training_data": str(args.training_data),
    }
    ModelArchive(model, train_config, metadata).save(args.model_path)
    print(f"best epoch {trainer.state.best_epoch} score {trainer.state.best_score:.2f}; saved {args.model_path}")
    out = _report_dir(args)
    if out is not None:
        with open(out / "training.tsv", "w", encoding="utf-8") as f:
            names = sorted({k for r in trainer.history for k in r.metrics})
            f.write("\t".join(["epoch", "loss", "score", "lr"] + names) + "\n")
            for r in trainer.history:
                row = [str(r.epoch), f"{r.loss:.6f}", f"{r.score:.4f}", f"{r.lr:g}"]
                row += [f"{r.metrics.get(n, float('nan')):.4f}" for n in names]
                f.write("\t".join(row) + "\n")
        from .plotting import plot_training

        plot_training(trainer.history, out / "training.png")
    return 0


# ---------------------------------------------------------------- predict


def cmd_predict(args) -> int:
    _require(args, "model_path", "input_file", "output_file")
    archive = ModelArchive.load(_readable(args.model_path))
    model = archive.model
    tb = read_input(_readable(args.input_file), strict=not args.lenient)
    token_vectors = TokenVectors.load(_readable(args.token_vectors_file)) if args.token_vectors_file else None
    names: List[str] = []
    if args.export_embeddings:
        names = _csv(args.embedding_names) or []
        allowed = available_embeddings(model.config.targets)
        for n in names:
            if n not in EMBEDDING_NAMES:
                raise CliError(f"unknown embedding {n!r}")
            if n not in allowed:
                raise CliError(f"embedding {n!r} is not available: its target is disabled in this model")
    sentences = tb.sentences
    size = max(1, args.batch_size)
    chunks = [(start, sentences[start : start + size]) for start in range(0, len(sentences), size)]

    def run(chunk):
        start, sents = chunk
        return model.predict_batch(sents, embeddings=bool(names), token_vectors=token_vectors, start_index=start)

    t0 = time.perf_counter()
    if args.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    elapsed = time.perf_counter() - t0
    predicted = [s for r in results for s in r]
    write_conllu(predicted, args.output_file)
    n_tokens = sum(len(s) for s in predicted)
    rate = n_tokens / elapsed if elapsed > 0 else float("inf")
    print(f"{len(predicted)} sentences, {n_tokens} tokens, {rate:.1f} tokens/s", file=sys.stderr)
    if args.export_embeddings:
        fmt = args.embeddings_format or ("binary" if args.export_embeddings.endswith(".bin") else "text")
        count = export_embeddings(predicted, args.export_embeddings, fmt=fmt, names=names)
        print(f"wrote {count} embedding records to {args.export_embeddings}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    _require(args, "gold_file", "input_file")
    gold = read_conllu(_readable(args.gold_file), strict=not args.lenient)
    system = read_conllu(_readable(args.input_file), strict=not args.lenient)
    report = evaluate(gold, system)
    print(report.as_text())
    print()
    print(report.as_key_value())
    out = _report_dir(args)
    if out is not None:
        (out / "eval.tsv").write_text(report.as_tsv(), encoding="utf-8")
        from .plotting import plot_report

        plot_report(report, out / "eval.png")
    return 0


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("MORPHPARSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    set_default_dtype(np.float64 if args.dtype == "float64" else np.float32)
    try:
        return COMMANDS[args.mode](args)
    except (CliError, ConlluError, EvaluationError, FeatureConfigError, TrainingError, EmbeddingError,
            ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        set_default_dtype(np.float32)


if __name__ == "__main__":
    sys.exit(main())
