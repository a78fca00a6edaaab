"""Character-offset span sets and their interval form, plus prediction-file IO."""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import TOXIC, CorpusError, Token


@dataclass(frozen=True)
class SpanSet:
    """A set of character offsets with its maximal-run interval representation."""

    offsets: frozenset[int]
    intervals: tuple[tuple[int, int], ...]

    @classmethod
    def from_offsets(cls, offsets) -> "SpanSet":
        offsets = frozenset(offsets)
        return cls(offsets, tuple(offsets_to_intervals(offsets)))

    def __bool__(self) -> bool:
        return bool(self.offsets)


def offsets_to_intervals(offsets) -> list[tuple[int, int]]:
    """Group offsets into maximal consecutive [start, end) runs, sorted ascending."""
    ordered = sorted(set(offsets))
    intervals: list[tuple[int, int]] = []
    for off in ordered:
        if intervals and off == intervals[-1][1]:
            intervals[-1] = (intervals[-1][0], off + 1)
        else:
            intervals.append((off, off + 1))
    return intervals


def intervals_to_offsets(intervals) -> frozenset[int]:
    """Inverse of :func:`offsets_to_intervals`."""
    out: set[int] = set()
    for start, end in intervals:
        out.update(range(start, end))
    return frozenset(out)


def labels_to_spans(tokens: list[Token], labels, text: str) -> SpanSet:
    """Union of toxic-token character ranges, bridging whitespace-only gaps
    between consecutive toxic tokens.

    Punctuation between toxic tokens is never bridged (it shows up as its own
    non-toxic token, so such a pair is not consecutive anyway).
    """
    if len(tokens) != len(labels):
        raise CorpusError(f"{len(tokens)} tokens vs {len(labels)} labels")
    offsets: set[int] = set()
    for tok, label in zip(tokens, labels):
        if label == TOXIC:
            offsets.update(range(tok.char_start, tok.char_end))
    for prev, cur, lab_prev, lab_cur in zip(tokens, tokens[1:], labels, labels[1:]):
        if lab_prev == TOXIC and lab_cur == TOXIC:
            gap = text[prev.char_end : cur.char_start]
            if gap and gap.isspace():
                offsets.update(range(prev.char_end, cur.char_start))
    return SpanSet.from_offsets(offsets)


def write_predictions(path: str | Path, rows: list[tuple[str, SpanSet]]) -> None:
    """Write line-delimited predictions: post id, tab, bracketed offset list."""
    with open(path, "w", encoding="utf-8") as fh:
        for post_id, spans in rows:
            fh.write(f"{post_id}\t{sorted(spans.offsets)}\n")


def read_predictions(path: str | Path) -> dict[str, SpanSet]:
    """Read a prediction file back into a map post id -> SpanSet."""
    out: dict[str, SpanSet] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                post_id, literal = line.split("\t", 1)
                offsets = ast.literal_eval(literal.strip())
            except (ValueError, SyntaxError) as exc:
                raise CorpusError(f"{path}:{line_no}: malformed prediction line") from exc
            if not isinstance(offsets, list) or not all(isinstance(v, int) for v in offsets):
                raise CorpusError(f"{path}:{line_no}: offsets are not an integer list")
            if post_id in out:
                raise CorpusError(f"{path}:{line_no}: duplicate prediction for id {post_id!r}")
            out[post_id] = SpanSet.from_offsets(offsets)
    return out
