"""Command-line interface.

    feedbackclf train     --arch cnn --train train.tsv --dev dev.tsv \
                          --model-out model.bin [--history-out hist.json]
    feedbackclf predict   --model model.bin --test test.tsv [--out preds.tsv]
    feedbackclf evaluate  --model model.bin --test test.tsv [--report-out rep.json]
    feedbackclf gradcheck [--seed N]
    feedbackclf stats     --data corpus.tsv

Exit codes: 0 success, 1 failed check (gradient check failure, non-finite
values), 2 unreadable or malformed data, 3 invalid configuration or usage,
4 unreadable model file (bad magic or unsupported version).

The random seed comes from --seed when given, else the FEEDBACK_CLF_SEED
environment variable, else 0. One seeded generator drives initialization,
shuffling, dropout, and label sampling, so a fixed seed reproduces
training bit for bit.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import gradcheck as gradcheck_mod
from .corpus import (
    LABELS,
    CorpusFormatError,
    build_vocab,
    corpus_stats,
    load_dataset,
    load_prediction_file,
)
from .metrics import evaluate, evaluate_sets, report_to_json
from .models import build_model, default_config, resolve_max_len
from .serialize import ModelFileError, load_model, save_model
from .trainer import default_train_config, train

ENV_SEED = "FEEDBACK_CLF_SEED"

JA_CAVEAT = (
    "whitespace tokenization splits Japanese text poorly; scores for "
    "language 'ja' understate what a segmentation-aware tokenizer would reach"
)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the config error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="feedbackclf",
                     description="customer-feedback sentence classifiers")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help=f"random seed (default: ${ENV_SEED} or 0)")
        p.add_argument("--clean-english", action="store_true",
                       help="fold curly quotes, drop control characters, "
                            "collapse whitespace before tokenizing")
        p.add_argument("--language", choices=("en", "es", "fr", "ja"), default=None,
                       help="corpus language; 'ja' adds a tokenization caveat")

    p_train = sub.add_parser("train", help="train a model and write it to disk")
    p_train.add_argument("--arch", required=True,
                         choices=("fasttext", "cnn", "bilstm1", "bilstm2", "bilstm3"))
    p_train.add_argument("--train", required=True, dest="train_path", metavar="TSV")
    p_train.add_argument("--dev", dest="dev_path", metavar="TSV")
    p_train.add_argument("--model-out", required=True, metavar="FILE")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--max-len", type=int)
    p_train.add_argument("--min-count", type=int, default=1)
    p_train.add_argument("--max-vocab", type=int)
    p_train.add_argument("--history-out", metavar="FILE",
                         help="write per-epoch loss/accuracy history as JSON")
    add_common(p_train)

    p_pred = sub.add_parser("predict", help="write id/label/score predictions")
    p_pred.add_argument("--model", required=True, metavar="FILE")
    p_pred.add_argument("--test", required=True, dest="test_path", metavar="TSV")
    p_pred.add_argument("--out", metavar="FILE", help="default: stdout")
    add_common(p_pred)

    p_eval = sub.add_parser("evaluate", help="score a labeled corpus")
    src = p_eval.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", metavar="FILE")
    src.add_argument("--predictions", metavar="TSV",
                     help="score an id/label/score prediction file instead "
                          "of running a model")
    p_eval.add_argument("--test", required=True, dest="test_path", metavar="TSV")
    p_eval.add_argument("--report-out", metavar="FILE", help="default: stdout")
    add_common(p_eval)

    p_gc = sub.add_parser("gradcheck",
                          help="finite-difference check of every backward pass")
    p_gc.add_argument("--seed", type=int, default=None)

    p_stats = sub.add_parser("stats", help="label distribution of a corpus")
    p_stats.add_argument("--data", required=True, dest="data_path", metavar="TSV")
    p_stats.add_argument("--clean-english", action="store_true")
    p_stats.add_argument("--language", choices=("en", "es", "fr", "ja"), default=None)

    return parser


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(ENV_SEED)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{ENV_SEED} must be an integer, got '{env}'") from None
    return 0


def _warn_language(args) -> None:
    if getattr(args, "language", None) == "ja":
        print(f"warning: {JA_CAVEAT}", file=sys.stderr)


def _cmd_train(args) -> int:
    seed = _resolve_seed(args)
    _warn_language(args)
    examples, _ = load_dataset(args.train_path, clean_english=args.clean_english)
    vocab = build_vocab((e.tokens for e in examples),
                        min_count=args.min_count, max_size=args.max_vocab)
    for e in examples:
        e.token_ids = [vocab.lookup(t) for t in e.tokens]
    dev_examples = None
    if args.dev_path:
        dev_examples, _ = load_dataset(args.dev_path, vocab=vocab,
                                       clean_english=args.clean_english)

    config = default_config(args.arch, len(vocab), max_len=args.max_len)
    resolve_max_len(config, examples)
    rng = np.random.default_rng(seed)
    model = build_model(config, rng, vocab=vocab, labels=LABELS)
    train_cfg = default_train_config(
        args.arch, learning_rate=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, seed=seed,
    )
    model, history = train(model, examples, dev_examples, train_cfg, rng)
    save_model(model, args.model_out)
    if args.history_out:
        with open(args.history_out, "w", encoding="utf-8") as fh:
            fh.write(history.to_json())

    print(f"trained {args.arch} on {len(examples)} examples "
          f"({len(history.train_loss)} epochs, {model.param_count()} parameters)")
    print(f"final train loss {history.train_loss[-1]:.6f}")
    if dev_examples:
        best = history.best_epoch or len(history.train_loss)
        print(f"dev exact accuracy {history.dev_exact_accuracy[best - 1]:.6f} "
              f"(epoch {best})")
    print(f"model written to {args.model_out}")
    return 0


def _load_for_inference(args):
    model = load_model(args.model)
    if model.vocab is None:
        raise ModelFileError(f"model file {args.model} carries no vocabulary")
    examples, _ = load_dataset(args.test_path, vocab=model.vocab,
                               clean_english=args.clean_english)
    return model, examples


def _cmd_predict(args) -> int:
    _warn_language(args)
    model, examples = _load_for_inference(args)
    lines = []
    for e in examples:
        pred = model.predict(e.token_ids)
        name = model.labels[pred.label_index]
        lines.append(f"{e.id}\t{name}\t{pred.scores[pred.label_index]:.6f}\n")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.writelines(lines)
        print(f"wrote {len(lines)} predictions to {args.out}")
    else:
        sys.stdout.writelines(lines)
    return 0


def _evaluate_prediction_file(args):
    examples, _ = load_dataset(args.test_path, clean_english=args.clean_english)
    preds = load_prediction_file(args.predictions)
    pred_sets = []
    for e in examples:
        if e.id not in preds:
            raise CorpusFormatError(f"no prediction for example '{e.id}'")
        pred_sets.append({LABELS.index(name) for name in preds[e.id]})
    extra = set(preds) - {e.id for e in examples}
    if extra:
        raise CorpusFormatError(
            f"prediction for unknown example id '{sorted(extra)[0]}'"
        )
    gold_sets = [set(e.gold_indices()) for e in examples]
    return evaluate_sets(pred_sets, gold_sets, LABELS)


def _cmd_evaluate(args) -> int:
    _warn_language(args)
    if args.predictions:
        report = _evaluate_prediction_file(args)
    else:
        model, examples = _load_for_inference(args)
        report = evaluate(model, examples)
    if args.language == "ja":
        report.caveat = JA_CAVEAT
    text = report_to_json(report)
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote report to {args.report_out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args)
    reports = gradcheck_mod.run_all(seed)
    ok = True
    for report in reports.values():
        print(report.describe())
        ok = ok and report.ok
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    print(f"all {len(reports)} gradient checks passed")
    return 0


def _cmd_stats(args) -> int:
    examples, stats = load_dataset(args.data_path, clean_english=args.clean_english)
    per_label = ", ".join(
        f'"{name}": {stats.per_label[name]}' for name in LABELS
    )
    print("{")
    print(f'  "n_examples": {stats.n_examples},')
    print(f'  "per_label": {{{per_label}}},')
    print(f'  "fraction_multilabel": {stats.fraction_multilabel:.6f},')
    print(f'  "fraction_comment_plus_complaint": '
          f'{stats.fraction_comment_plus_complaint:.6f}')
    print("}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "gradcheck": _cmd_gradcheck,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CorpusFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ModelFileError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FloatingPointError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
