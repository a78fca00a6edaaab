"""Token augmentation features: per-token TF-IDF weight and word-list membership flag."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Dataset, Token, tokenize


class FeatureError(ValueError):
    pass


class Augmentation(str, enum.Enum):
    """Which extra scalars get appended to each token vector (order: tfidf, flag)."""

    NONE = "none"
    TFIDF = "tfidf"
    WORDLIST = "wordlist"
    BOTH = "both"

    @property
    def width(self) -> int:
        return {"none": 0, "tfidf": 1, "wordlist": 1, "both": 2}[self.value]

    @property
    def uses_tfidf(self) -> bool:
        return self in (Augmentation.TFIDF, Augmentation.BOTH)

    @property
    def uses_wordlist(self) -> bool:
        return self in (Augmentation.WORDLIST, Augmentation.BOTH)


@dataclass(frozen=True)
class TfIdfModel:
    """Document frequencies over case-folded terms of the training split."""

    df: Mapping[str, int]
    n_docs: int

    def idf(self, term: str) -> float:
        # Smoothed idf; unseen terms take df = 0 and get the largest weight.
        d = self.df.get(term, 0)
        return math.log((1 + self.n_docs) / (1 + d)) + 1.0

    def to_record(self) -> dict:
        return {
            "version": 1,
            "n_docs": self.n_docs,
            "df": [[term, self.df[term]] for term in sorted(self.df)],
        }

    @classmethod
    def from_record(cls, record: dict) -> "TfIdfModel":
        if record.get("version") != 1:
            raise FeatureError(f"unsupported tf-idf record version {record.get('version')!r}")
        return cls({term: int(count) for term, count in record["df"]}, int(record["n_docs"]))


@dataclass(frozen=True)
class WordList:
    terms: frozenset[str]

    def to_record(self) -> list[str]:
        return sorted(self.terms)

    @classmethod
    def from_record(cls, record: Iterable[str]) -> "WordList":
        return cls(frozenset(record))


@dataclass(frozen=True)
class TokenFeatures:
    tfidf: float
    in_word_list: int


def term_of(token: Token) -> str:
    return token.surface.casefold()


def fit_tfidf(training: Dataset) -> TfIdfModel:
    """Count, per case-folded term, the number of training posts containing it."""
    if len(training) == 0:
        raise FeatureError("cannot fit tf-idf on an empty dataset")
    df: Counter[str] = Counter()
    for post in training:
        df.update({term_of(tok) for tok in tokenize(post.text)})
    return TfIdfModel(dict(df), len(training))


def doc_term_counts(tokens: Iterable[Token]) -> dict[str, int]:
    return dict(Counter(term_of(tok) for tok in tokens))


def tfidf_weight(model: TfIdfModel, token: Token, counts: Mapping[str, int]) -> float:
    """Raw tf * idf for the token's term, max-normalized over the post's terms.

    ``counts`` must be the term counts of the token's own post. An all-zero
    post (no terms) yields 0.
    """
    max_raw = max((tf * model.idf(term) for term, tf in counts.items()), default=0.0)
    if max_raw == 0.0:
        return 0.0
    term = term_of(token)
    raw = counts.get(term, 0) * model.idf(term)
    return raw / max_raw


def post_tfidf_weights(model: TfIdfModel, tokens: list[Token]) -> np.ndarray:
    """Vector of normalized weights for all tokens of one post."""
    counts = doc_term_counts(tokens)
    return np.array([tfidf_weight(model, tok, counts) for tok in tokens], dtype=np.float64)


def load_word_list(path: str | Path) -> WordList:
    """One case-folded term per line; blank lines and '#' comments are skipped."""
    terms: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if any(ch.isspace() for ch in stripped):
                raise FeatureError(f"{path}:{line_no}: word list term contains whitespace")
            terms.add(stripped.casefold())
    if not terms:
        raise FeatureError(f"{path}: empty word list")
    return WordList(frozenset(terms))


def _strip_outer_punctuation(term: str) -> str:
    start, end = 0, len(term)
    while start < end and not term[start].isalnum():
        start += 1
    while end > start and not term[end - 1].isalnum():
        end -= 1
    return term[start:end]


def word_list_flag(word_list: WordList, token: Token) -> int:
    """1 iff the case-folded surface, shorn of outer punctuation, is a listed term."""
    return 1 if _strip_outer_punctuation(term_of(token)) in word_list.terms else 0


def post_word_list_flags(word_list: WordList, tokens: list[Token]) -> np.ndarray:
    return np.array([word_list_flag(word_list, tok) for tok in tokens], dtype=np.float64)


def augment(vector: np.ndarray, features: TokenFeatures, mode: Augmentation) -> np.ndarray:
    """Append the configured feature scalars (tfidf first, then flag) to one vector."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] < 1:
        raise FeatureError(f"expected a vector of dimension >= 1, got shape {vector.shape}")
    extra = []
    if mode.uses_tfidf:
        extra.append(features.tfidf)
    if mode.uses_wordlist:
        extra.append(float(features.in_word_list))
    if not extra:
        return vector.copy()
    return np.concatenate([vector, np.array(extra, dtype=np.float64)])


def augment_matrix(vectors: np.ndarray, tfidf: np.ndarray | None, flags: np.ndarray | None,
                   mode: Augmentation) -> np.ndarray:
    """Row-wise augment for a whole post; columns ordered tfidf then flag."""
    cols = [np.asarray(vectors, dtype=np.float64)]
    if mode.uses_tfidf:
        cols.append(np.asarray(tfidf, dtype=np.float64)[:, None])
    if mode.uses_wordlist:
        cols.append(np.asarray(flags, dtype=np.float64)[:, None])
    return np.concatenate(cols, axis=1) if len(cols) > 1 else cols[0].copy()
