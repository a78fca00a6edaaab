"""Annotated posts: CSV ingestion, offset-tracking tokenization, label projection.

A post is a unicode text plus an optional set of gold character offsets
marking its toxic characters. Tokens keep their [char_start, char_end)
position in the original text so that token-level labels can be projected
back to character spans losslessly.
"""

from __future__ import annotations

import ast
import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

NON_TOXIC = 0
TOXIC = 1
LABEL_NAMES = ("non-toxic", "toxic")

_APOSTROPHES = ("'", "’")


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class Post:
    """One text with optional gold toxic character offsets."""

    id: str
    text: str
    gold_offsets: Optional[frozenset[int]] = None

    def __post_init__(self):
        if self.gold_offsets is not None:
            object.__setattr__(self, "gold_offsets", frozenset(self.gold_offsets))
            for off in self.gold_offsets:
                if not 0 <= off < len(self.text):
                    raise CorpusError(
                        f"post {self.id!r}: offset {off} outside text of length {len(self.text)}"
                    )


@dataclass(frozen=True)
class Token:
    """A token surface plus its [char_start, char_end) slice of the source text."""

    surface: str
    char_start: int
    char_end: int
    label: Optional[int] = None

    def with_label(self, label: int) -> "Token":
        return Token(self.surface, self.char_start, self.char_end, label)


@dataclass(frozen=True)
class TokenizedPost:
    post: Post
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class Dataset:
    posts: tuple[Post, ...]
    split_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "posts", tuple(self.posts))
        seen = set()
        for post in self.posts:
            if post.id in seen:
                raise CorpusError(f"duplicate post id {post.id!r} in dataset")
            seen.add(post.id)

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self):
        return iter(self.posts)


def tokenize(text: str) -> list[Token]:
    """Split text into maximal alphanumeric runs (internal apostrophes kept)
    and single punctuation characters, recording character offsets.

    Whitespace never appears inside a token; empty text yields no tokens.
    """
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isalnum():
            j = i + 1
            while j < n:
                c = text[j]
                if c.isalnum():
                    j += 1
                elif c in _APOSTROPHES and j + 1 < n and text[j + 1].isalnum():
                    j += 1  # internal apostrophe; next pass consumes the run after it
                else:
                    break
            tokens.append(Token(text[i:j], i, j))
            i = j
        else:
            tokens.append(Token(ch, i, i + 1))
            i += 1
    return tokens


def labels_from_offsets(tokens: Iterable[Token], offsets: frozenset[int] | set[int]) -> list[int]:
    """Any-overlap projection: a token is toxic iff it shares >= 1 character with offsets."""
    return [
        TOXIC if any(c in offsets for c in range(tok.char_start, tok.char_end)) else NON_TOXIC
        for tok in tokens
    ]


def project_labels(post: Post, tokens: list[Token]) -> TokenizedPost:
    """Attach gold labels to tokens using the any-overlap rule.

    Requires the post to carry gold offsets.
    """
    if post.gold_offsets is None:
        raise CorpusError(f"post {post.id!r} has no gold offsets to project")
    labels = labels_from_offsets(tokens, post.gold_offsets)
    return TokenizedPost(post, tuple(t.with_label(l) for t, l in zip(tokens, labels)))


def _parse_span_literal(raw: str, row: int) -> frozenset[int]:
    try:
        value = ast.literal_eval(raw.strip())
    except (ValueError, SyntaxError) as exc:
        raise CorpusError(f"row {row}: malformed span literal {raw!r}") from exc
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise CorpusError(f"row {row}: span literal {raw!r} is not a list of integers")
    return frozenset(value)


def parse_dataset(path: str | Path, has_gold: bool, split_name: str = "") -> Dataset:
    """Read a CSV of posts (header row; `text` column, `spans` column when labeled).

    Posts keep file order. Row numbers in error messages are 1-based data rows.
    When ``has_gold`` is false the spans column is ignored even if present.
    An ``id`` column is honored when present, else the 0-based row index is used.
    """
    posts: list[Post] = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "text" not in fields:
            raise CorpusError(f"{path}: missing required column 'text'")
        if has_gold and "spans" not in fields:
            raise CorpusError(f"{path}: missing required column 'spans'")
        for row_no, row in enumerate(reader, start=1):
            text = row["text"]
            if text is None:
                raise CorpusError(f"row {row_no}: missing text field")
            post_id = row["id"] if "id" in fields else str(row_no - 1)
            offsets: Optional[frozenset[int]] = None
            if has_gold:
                offsets = _parse_span_literal(row["spans"], row_no)
                for off in sorted(offsets):
                    if off < 0 or off >= len(text):
                        raise CorpusError(
                            f"row {row_no}: offset {off} outside text of length {len(text)}"
                        )
            posts.append(Post(post_id, text, offsets))
    return Dataset(tuple(posts), split_name)


def write_dataset_csv(dataset: Dataset, path: str | Path, with_ids: bool = True) -> None:
    """Write posts back to the CSV format accepted by :func:`parse_dataset`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = (["id"] if with_ids else []) + ["spans", "text"]
        writer.writerow(header)
        for post in dataset:
            spans = "[]" if post.gold_offsets is None else str(sorted(post.gold_offsets))
            row = ([post.id] if with_ids else []) + [spans, post.text]
            writer.writerow(row)


def dataset_to_jsonl(dataset: Dataset, path: str | Path) -> None:
    """Serialize to the canonical line-delimited form: one object per post."""
    with open(path, "w", encoding="utf-8") as fh:
        for post in dataset:
            record = {
                "id": post.id,
                "text": post.text,
                "gold_offsets": sorted(post.gold_offsets) if post.gold_offsets is not None else None,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def dataset_from_jsonl(path: str | Path, split_name: str = "") -> Dataset:
    posts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            offsets = record["gold_offsets"]
            posts.append(
                Post(record["id"], record["text"], frozenset(offsets) if offsets is not None else None)
            )
    return Dataset(tuple(posts), split_name)
