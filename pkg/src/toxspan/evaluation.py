"""Span-level F1 scoring, token confusion matrices, and pairwise model comparison reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import LABEL_NAMES, NON_TOXIC, TOXIC, Dataset
from .spans import SpanSet


class EvalError(ValueError):
    pass


def format_f1(value: float) -> str:
    return f"{value:.5f}"


def span_f1(gold: SpanSet, pred: SpanSet) -> tuple[float, float, float]:
    """Character-overlap precision/recall/F1 for one post.

    Both sets empty scores (1, 1, 1); exactly one empty scores (0, 0, 0).
    """
    g, p = gold.offsets, pred.offsets
    if not g and not p:
        return (1.0, 1.0, 1.0)
    if not g or not p:
        return (0.0, 0.0, 0.0)
    overlap = len(g & p)
    precision = overlap / len(p)
    recall = overlap / len(g)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return (precision, recall, f1)


@dataclass(frozen=True)
class SpanF1Result:
    per_post: tuple[tuple[str, float, float, float], ...]  # (id, precision, recall, f1)

    @property
    def macro_f1(self) -> float:
        return sum(row[3] for row in self.per_post) / len(self.per_post)


def macro_f1(dataset: Dataset, predictions: Mapping[str, SpanSet]) -> SpanF1Result:
    """Mean per-post F1 with equal post weights; every post id must be predicted."""
    missing = [post.id for post in dataset if post.id not in predictions]
    if missing:
        raise EvalError(f"missing predictions for ids: {', '.join(missing)}")
    rows = []
    for post in dataset:
        if post.gold_offsets is None:
            raise EvalError(f"post {post.id!r} has no gold offsets to score against")
        gold = SpanSet.from_offsets(post.gold_offsets)
        p, r, f1 = span_f1(gold, predictions[post.id])
        rows.append((post.id, p, r, f1))
    if not rows:
        raise EvalError("cannot evaluate an empty dataset")
    return SpanF1Result(tuple(rows))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Token-level counts with toxic as the positive class."""

    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def accuracy(self) -> float:
        return (self.tn + self.tp) / self.total if self.total else 0.0


def token_confusion(gold_labels: Sequence[int], pred_labels: Sequence[int]) -> ConfusionMatrix:
    if len(gold_labels) != len(pred_labels):
        raise EvalError(f"{len(gold_labels)} gold labels vs {len(pred_labels)} predictions")
    tn = fp = fn = tp = 0
    for g, p in zip(gold_labels, pred_labels):
        if g == TOXIC:
            if p == TOXIC:
                tp += 1
            else:
                fn += 1
        else:
            if p == TOXIC:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tn, fp, fn, tp)


@dataclass(frozen=True)
class ModelComparison:
    """Two confusion matrices over the same filtered token multiset, their
    per-cell deltas (B minus A), and a capped disagreement listing."""

    matrix_a: ConfusionMatrix
    matrix_b: ConfusionMatrix
    examples: tuple[tuple[str, str, int, int, int], ...]  # (post id, surface, gold, a, b)
    retained: int

    def __post_init__(self):
        if self.matrix_a.total != self.matrix_b.total:
            raise EvalError("comparison matrices do not cover the same token multiset")

    @property
    def deltas(self) -> dict[str, int]:
        return {
            "tn": self.matrix_b.tn - self.matrix_a.tn,
            "fp": self.matrix_b.fp - self.matrix_a.fp,
            "fn": self.matrix_b.fn - self.matrix_a.fn,
            "tp": self.matrix_b.tp - self.matrix_a.tp,
        }

    @property
    def accuracy_delta(self) -> float:
        return self.matrix_b.accuracy - self.matrix_a.accuracy


def filtered_pairwise_comparison(
    gold_labels: Sequence[int],
    preds_a: Sequence[int],
    preds_b: Sequence[int],
    meta: Optional[Sequence[tuple[str, str, int]]] = None,
    max_examples: int = 50,
) -> ModelComparison:
    """Drop tokens that both models correctly predicted non-toxic; build both
    confusion matrices over the retained tokens.

    ``meta`` supplies (post id, surface, char offset) per token for the
    disagreement listing, which keeps retained tokens where the triple
    (gold, a, b) is not unanimous, ordered by post id then offset.
    """
    if not (len(gold_labels) == len(preds_a) == len(preds_b)):
        raise EvalError(
            f"misaligned label streams: {len(gold_labels)} gold, {len(preds_a)} A, {len(preds_b)} B"
        )
    if meta is not None and len(meta) != len(gold_labels):
        raise EvalError(f"misaligned metadata: {len(meta)} entries for {len(gold_labels)} tokens")
    kept_g: list[int] = []
    kept_a: list[int] = []
    kept_b: list[int] = []
    disagreements = []
    for i, (g, a, b) in enumerate(zip(gold_labels, preds_a, preds_b)):
        if g == NON_TOXIC and a == NON_TOXIC and b == NON_TOXIC:
            continue
        kept_g.append(g)
        kept_a.append(a)
        kept_b.append(b)
        if meta is not None and not (g == a == b):
            post_id, surface, offset = meta[i]
            disagreements.append((post_id, surface, offset, g, a, b))
    disagreements.sort(key=lambda row: (row[0], row[2]))
    examples = tuple((pid, surf, g, a, b) for pid, surf, _, g, a, b in disagreements[:max_examples])
    return ModelComparison(
        matrix_a=token_confusion(kept_g, kept_a),
        matrix_b=token_confusion(kept_g, kept_b),
        examples=examples,
        retained=len(kept_g),
    )


def _matrix_lines(name: str, m: ConfusionMatrix) -> list[str]:
    return [
        f"{name} (true x predicted)",
        f"{'':>12}{LABEL_NAMES[0]:>12}{LABEL_NAMES[1]:>12}",
        f"{LABEL_NAMES[0]:>12}{m.tn:>12}{m.fp:>12}",
        f"{LABEL_NAMES[1]:>12}{m.fn:>12}{m.tp:>12}",
    ]


def render_report(result: SpanF1Result | ModelComparison, per_post: bool = False) -> str:
    """Deterministic plain-text rendering; F1 values carry 5 decimal places."""
    lines: list[str] = []
    if isinstance(result, SpanF1Result):
        if per_post:
            lines.append(f"{'post':>12}{'precision':>12}{'recall':>12}{'f1':>12}")
            for post_id, p, r, f1 in result.per_post:
                lines.append(f"{post_id:>12}{format_f1(p):>12}{format_f1(r):>12}{format_f1(f1):>12}")
        lines.append(f"macro F1 {format_f1(result.macro_f1)}")
    elif isinstance(result, ModelComparison):
        lines.extend(_matrix_lines("model A", result.matrix_a))
        lines.extend(_matrix_lines("model B", result.matrix_b))
        d = result.deltas
        lines.append(
            f"delta (B - A): tn {d['tn']:+d}, fp {d['fp']:+d}, fn {d['fn']:+d}, tp {d['tp']:+d}"
        )
        lines.append(f"retained tokens {result.retained}")
        lines.append(f"accuracy delta (B - A) {result.accuracy_delta * 100:+.2f}%")
        if result.examples:
            lines.append("disagreements (post, token, gold, A, B):")
            for post_id, surface, g, a, b in result.examples:
                lines.append(
                    f"  {post_id}  {surface!r}  gold={LABEL_NAMES[g]}  A={LABEL_NAMES[a]}  B={LABEL_NAMES[b]}"
                )
    else:
        raise EvalError(f"cannot render {type(result).__name__}")
    return "\n".join(lines) + "\n"


def render_records(result: SpanF1Result | ModelComparison) -> list[str]:
    """Machine-readable line-delimited rendering of the same report."""
    records: list[dict] = []
    if isinstance(result, SpanF1Result):
        for post_id, p, r, f1 in result.per_post:
            records.append({"kind": "post", "id": post_id, "precision": p, "recall": r, "f1": f1})
        records.append({"kind": "macro", "macro_f1": result.macro_f1})
    elif isinstance(result, ModelComparison):
        for name, m in (("a", result.matrix_a), ("b", result.matrix_b)):
            records.append({"kind": "matrix", "model": name, "tn": m.tn, "fp": m.fp, "fn": m.fn, "tp": m.tp})
        records.append({"kind": "delta", **result.deltas, "accuracy_delta": result.accuracy_delta})
        for post_id, surface, g, a, b in result.examples:
            records.append(
                {"kind": "disagreement", "id": post_id, "token": surface, "gold": g, "a": a, "b": b}
            )
    else:
        raise EvalError(f"cannot render {type(result).__name__}")
    return [json.dumps(r, sort_keys=True) for r in records]
