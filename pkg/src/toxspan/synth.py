"""Synthetic lexicon-driven corpus for desk-scale training and acceptance runs.

Posts are random word sequences over a closed vocabulary; a fixed subset of
the vocabulary is the toxic lexicon, and gold spans are exactly the character
spans a perfect token labeler would decode for lexicon hits. A model that
learns the lexicon can therefore reach span-F1 1.0.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Dataset, Post, tokenize
from .spans import labels_to_spans
from .features import WordList

_CONSONANTS = "bcdfghjklmnpqrstvwz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthCorpus:
    train: Dataset
    validation: Dataset
    test: Dataset
    lexicon: WordList


def _make_vocabulary(rng: np.random.Generator, size: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        syllables = rng.integers(2, 5)
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _make_post(rng: np.random.Generator, post_id: str, vocab: list[str], lexicon: set[str],
               toxic_rate: float) -> Post:
    clean = [w for w in vocab if w not in lexicon]
    toxic = [w for w in vocab if w in lexicon]
    n_words = int(rng.integers(4, 19))
    pieces: list[str] = []
    for i in range(n_words):
        pool = toxic if rng.random() < toxic_rate else clean
        word = pool[rng.integers(len(pool))]
        if rng.random() < 0.15:
            word = word.capitalize()
        if rng.random() < 0.08 and i < n_words - 1:
            word += ","
        pieces.append(word)
    text = " ".join(pieces)
    if rng.random() < 0.5:
        text += "." if rng.random() < 0.7 else "!"
    tokens = tokenize(text)
    labels = [1 if tok.surface.casefold() in lexicon else 0 for tok in tokens]
    gold = labels_to_spans(tokens, labels, text).offsets
    return Post(post_id, text, gold)


def generate_corpus(
    seed: int = 13,
    n_posts: int = 2000,
    vocab_size: int = 500,
    lexicon_size: int = 30,
    toxic_rate: float = 0.15,
    train_fraction: float = 0.8,
    validation_fraction: float = 0.1,
) -> SynthCorpus:
    """Deterministic corpus split into train/validation/test by post order."""
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = _make_vocabulary(rng, vocab_size)
    lexicon = set(rng.choice(vocab, size=lexicon_size, replace=False).tolist())
    posts = [
        _make_post(rng, f"p{i:05d}", vocab, lexicon, toxic_rate) for i in range(n_posts)
    ]
    n_train = int(round(n_posts * train_fraction))
    n_val = int(round(n_posts * validation_fraction))
    return SynthCorpus(
        train=Dataset(tuple(posts[:n_train]), "train"),
        validation=Dataset(tuple(posts[n_train : n_train + n_val]), "validation"),
        test=Dataset(tuple(posts[n_train + n_val :]), "test"),
        lexicon=WordList(frozenset(lexicon)),
    )


def write_corpus(corpus: SynthCorpus, outdir: str | Path) -> dict[str, Path]:
    """Write train/validation/test CSVs plus the true lexicon file."""
    from .corpus import write_dataset_csv

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": outdir / "train.csv",
        "validation": outdir / "validation.csv",
        "test": outdir / "test.csv",
        "lexicon": outdir / "lexicon.txt",
    }
    write_dataset_csv(corpus.train, paths["train"])
    write_dataset_csv(corpus.validation, paths["validation"])
    write_dataset_csv(corpus.test, paths["test"])
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        for term in sorted(corpus.lexicon.terms):
            fh.write(term + "\n")
    return paths
