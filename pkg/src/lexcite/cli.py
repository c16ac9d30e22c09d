"""``lexcite`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import apply_overrides, load_config, parse_kernels
from .evaluation import format_ablation


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory (default $LEXCITE_DATA_DIR/run)")
    p.add_argument("--mode", choices=["stemmed", "lemmatized"])
    p.add_argument("-v", "--verbose", action="store_true")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernels", help="comma-separated kernel sizes, e.g. 2,3,5")
    p.add_argument("--embedding-init", choices=["pretrained", "random"])
    p.add_argument("--class-weights", choices=["none", "inverse-frequency"])
    p.add_argument("--epochs", type=int, help="maximum training epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexcite", description="Citation-treatment classification pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="split the corpus and cache preprocessed tokens")
    _common(p)
    p.add_argument("corpus", nargs="?", help="corpus CSV (default $LEXCITE_DATA_DIR/corpus.csv)")

    p = sub.add_parser("train-embeddings", help="train subword embeddings on the training split")
    _common(p)

    p = sub.add_parser("train", help="train the convolutional classifier")
    _common(p)
    _model_flags(p)

    p = sub.add_parser("evaluate", help="metrics, ROC curves, noise robustness and the KNN baseline")
    _common(p)
    p.add_argument("--model", help="model file (default <out>/model/model.lxcn)")
    p.add_argument("--sigma", type=float, help="embedding noise standard deviation")

    p = sub.add_parser("ablate", help="train and evaluate one model per kernel configuration")
    _common(p)
    _model_flags(p)
    p.add_argument("--configs", help="semicolon-separated kernel sets, e.g. '3;3,4;2,3,5'")

    p = sub.add_parser("bench", help="single-document inference latency")
    _common(p)
    p.add_argument("--model")
    p.add_argument("--reps", type=int)
    p.add_argument("--warmup", type=int)

    p = sub.add_parser("classify", help="predict labels for raw documents")
    p.add_argument("model", help="model file")
    p.add_argument("inputs", nargs="*", help="text files, one document each; '-' or none reads standard input")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _read_inputs(paths) -> list:
    if not paths or paths == ["-"]:
        return [sys.stdin.read()]
    out = []
    for p in paths:
        if p == "-":
            out.append(sys.stdin.read())
        else:
            path = Path(p)
            if not path.exists():
                raise FileNotFoundError(f"input file not found: {path}")
            out.append(path.read_text(encoding="utf-8"))
    return out


def cmd_classify(args) -> None:
    clf = pipeline.Classifier.load(args.model)
    texts = _read_inputs(args.inputs)
    probs = clf.proba_text(texts)
    labels = clf.labels.labels
    print("label\t" + "\t".join(labels))
    for row in probs:
        print(labels[int(row.argmax())] + "\t" + "\t".join(f"{p:.6f}" for p in row))


def run(args) -> None:
    if args.command == "classify":
        cmd_classify(args)
        return
    rc = apply_overrides(load_config(args.config), args)
    if args.command == "prepare":
        out = pipeline.prepare(rc)
        print(f"prepared {out}")
    elif args.command == "train-embeddings":
        print(f"embeddings {pipeline.train_embeddings(rc)}")
    elif args.command == "train":
        def progress(r):
            print(f"epoch {r.epoch} train_loss={r.train_loss:.4f} train_acc={r.train_acc:.4f} "
                  f"val_loss={r.val_loss:.4f} val_acc={r.val_acc:.4f}", flush=True)
        print(f"model {pipeline.train_model(rc, progress)}")
    elif args.command == "evaluate":
        res = pipeline.evaluate(rc, args.model)
        print(f"accuracy={res['accuracy']:.4f}")
        print(f"macro_f1={res['report'].macro['f1']:.4f}")
        print(f"noisy_accuracy={res['noisy_accuracy']:.4f}")
        print(f"knn_accuracy={res['knn_accuracy']:.4f}")
        print(f"report {res['out'] / 'report.txt'}")
    elif args.command == "ablate":
        configs = [parse_kernels(c) for c in args.configs.split(";")] if args.configs else None
        print(format_ablation(pipeline.ablate(rc, configs)))
    elif args.command == "bench":
        print("\n".join(pipeline.bench(rc, args.model).to_lines()))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (ValueError, OSError, RuntimeError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
