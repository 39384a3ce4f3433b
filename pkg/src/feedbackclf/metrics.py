"""Evaluation: exact accuracy, micro-averaged F1, and per-tag F1.

Predictions and gold annotations are both sets of label indices. The
models emit a single top label per sentence, but the gold side may carry
several labels, so every metric is defined over (pred_set, gold_set)
pairs:

    exact accuracy  fraction of examples whose predicted set equals the
                    gold set exactly
    micro F1        precision/recall over pooled label instances across
                    the whole collection (tp counted per label instance)
    per-tag F1      one precision/recall/F1 row per label

Zero denominators (no predictions, no gold, or P + R = 0) yield 0.0
rather than an error.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import LABELS


def _check_lengths(pred_sets, gold_sets):
    if len(pred_sets) != len(gold_sets):
        raise ValueError(
            f"got {len(pred_sets)} predictions for {len(gold_sets)} gold annotations"
        )
    if not gold_sets:
        raise ValueError("cannot evaluate an empty collection")


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    if precision == recall:
        # the harmonic mean of equal values is that value; skipping the
        # general formula avoids its rounding, keeping F1 == P == R exact
        return precision
    return 2.0 * precision * recall / (precision + recall)


def exact_accuracy(pred_sets, gold_sets) -> float:
    """Fraction of examples where the predicted label set matches gold exactly."""
    _check_lengths(pred_sets, gold_sets)
    hits = sum(1 for p, g in zip(pred_sets, gold_sets) if set(p) == set(g))
    return hits / len(gold_sets)


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _prf(tp: int, fp: int, fn: int) -> PRF:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return PRF(precision, recall, _f1(precision, recall), tp, fp, fn)


def micro_f1(pred_sets, gold_sets) -> PRF:
    """Precision/recall/F1 over label instances pooled across all examples."""
    _check_lengths(pred_sets, gold_sets)
    tp = fp = fn = 0
    for p, g in zip(pred_sets, gold_sets):
        p, g = set(p), set(g)
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    return _prf(tp, fp, fn)


def per_tag_f1(pred_sets, gold_sets, label_set=LABELS) -> dict[int, PRF]:
    """One precision/recall/F1 row per label index, keyed by label index."""
    _check_lengths(pred_sets, gold_sets)
    rows = {}
    for idx in range(len(label_set)):
        tp = fp = fn = 0
        for p, g in zip(pred_sets, gold_sets):
            hit_p, hit_g = idx in p, idx in g
            tp += hit_p and hit_g
            fp += hit_p and not hit_g
            fn += hit_g and not hit_p
        rows[idx] = _prf(tp, fp, fn)
    return rows


@dataclass
class EvalReport:
    exact_accuracy: float
    micro: PRF
    per_tag: dict[int, PRF]
    n_examples: int
    labels: tuple[str, ...]
    caveat: str | None = None


def evaluate_sets(pred_sets, gold_sets, label_set=LABELS) -> EvalReport:
    return EvalReport(
        exact_accuracy=exact_accuracy(pred_sets, gold_sets),
        micro=micro_f1(pred_sets, gold_sets),
        per_tag=per_tag_f1(pred_sets, gold_sets, label_set),
        n_examples=len(gold_sets),
        labels=tuple(label_set),
    )


def evaluate(model, examples) -> EvalReport:
    """Score ``examples`` with ``model`` (anything with a ``predict`` that
    returns an object with ``label_index``) and compute all three metrics."""
    pred_sets = [{model.predict(e.token_ids).label_index} for e in examples]
    gold_sets = [set(e.gold_indices()) for e in examples]
    return evaluate_sets(pred_sets, gold_sets, model.labels)


def report_to_json(report: EvalReport) -> str:
    """Serialize a report with fixed six-decimal floats.

    Hand-rolled so numbers always carry six decimals (0.800000, not 0.8),
    keeping reports byte-comparable across runs.
    """

    def num(x: float) -> str:
        return f"{x:.6f}"

    def prf_obj(prf: PRF, counts: bool) -> str:
        parts = [
            f'"precision": {num(prf.precision)}',
            f'"recall": {num(prf.recall)}',
            f'"f1": {num(prf.f1)}',
        ]
        if counts:
            parts += [f'"tp": {prf.tp}', f'"fp": {prf.fp}', f'"fn": {prf.fn}']
        return "{" + ", ".join(parts) + "}"

    lines = [
        "{",
        f'  "exact_accuracy": {num(report.exact_accuracy)},',
        f'  "micro": {prf_obj(report.micro, counts=False)},',
        '  "per_tag": {',
    ]
    tag_lines = [
        f'    "{name}": {prf_obj(report.per_tag[idx], counts=True)}'
        for idx, name in enumerate(report.labels)
    ]
    lines.append(",\n".join(tag_lines))
    lines.append("  },")
    lines.append(f'  "n_examples": {report.n_examples}' + ("," if report.caveat else ""))
    if report.caveat:
        import json

        lines.append(f'  "caveat": {json.dumps(report.caveat)}')
    lines.append("}")
    return "\n".join(lines) + "\n"
