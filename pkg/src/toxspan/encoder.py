"""Per-token embedding vectors.

Two sources behind one interface: a precomputed contextual-embedding sidecar
(subword vectors pooled onto word tokens by character overlap), or a built-in
trainable contextualizer (hashed token embeddings, windowed concatenation,
linear projection) whose parameters are updated jointly with the heads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Dataset, Token, tokenize

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderSpec:
    """Configuration of the embedding source.

    ``kind`` is "precomputed" or "trainable". For the trainable contextualizer,
    ``table_size`` (H) rows of dimension ``embed_dim`` are hashed token
    embeddings; the concatenated window of radius ``window`` is projected to
    dimension ``dim``.
    """

    kind: str
    dim: int = 64
    table_size: int = 65536
    embed_dim: int = 32
    window: int = 2

    def __post_init__(self):
        if self.kind not in ("precomputed", "trainable"):
            raise EncoderError(f"unknown encoder kind {self.kind!r}")
        if min(self.dim, self.table_size, self.embed_dim) < 1 or self.window < 0:
            raise EncoderError("encoder dimensions must be positive")

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "table_size": self.table_size,
            "embed_dim": self.embed_dim,
            "window": self.window,
        }

    @classmethod
    def from_record(cls, record: dict) -> "EncoderSpec":
        return cls(**record)


@dataclass
class TrainableEncoderParams:
    """Embedding table (H x embed_dim) and projection ((2w+1)*embed_dim x dim)."""

    spec: EncoderSpec
    emb: np.ndarray
    proj: np.ndarray


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a over the UTF-8 bytes; deterministic across runs and platforms."""
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def token_rows(tokens: Iterable[Token], table_size: int) -> np.ndarray:
    """Hash case-folded surfaces into embedding-table rows."""
    return np.array([fnv1a_64(tok.surface.casefold()) % table_size for tok in tokens], dtype=np.int64)


def window_rows(rows: np.ndarray, window: int) -> np.ndarray:
    """T x (2w+1) row indices for each token's context window; -1 marks padding."""
    t = len(rows)
    out = np.full((t, 2 * window + 1), -1, dtype=np.int64)
    for k in range(-window, window + 1):
        lo, hi = max(0, -k), min(t, t - k)
        out[lo:hi, k + window] = rows[lo + k : hi + k]
    return out


def init_trainable(spec: EncoderSpec, seed: int) -> TrainableEncoderParams:
    """Seeded uniform [-0.1, 0.1] init for the table and the projection."""
    rng = np.random.Generator(np.random.PCG64(seed))
    emb = rng.uniform(-0.1, 0.1, size=(spec.table_size, spec.embed_dim))
    proj = rng.uniform(-0.1, 0.1, size=((2 * spec.window + 1) * spec.embed_dim, spec.dim))
    return TrainableEncoderParams(spec, emb, proj)


def gather_windows(emb: np.ndarray, windows: np.ndarray) -> np.ndarray:
    """Concatenate window embeddings per token; padding slots contribute zeros."""
    t, slots = windows.shape
    d_e = emb.shape[1]
    x = np.zeros((t, slots * d_e), dtype=np.float64)
    flat = windows.ravel()
    mask = flat >= 0
    x.reshape(t * slots, d_e)[mask] = emb[flat[mask]]
    return x


def encode_forward(params: TrainableEncoderParams, windows: np.ndarray):
    """Return (gathered window matrix X, projected vectors V = X @ proj)."""
    x = gather_windows(params.emb, windows)
    return x, x @ params.proj


def encode(params: TrainableEncoderParams, tokens: list[Token]) -> np.ndarray:
    """Deterministic forward pass for a token list; shape (T, dim)."""
    rows = token_rows(tokens, params.spec.table_size)
    windows = window_rows(rows, params.spec.window)
    if len(tokens) == 0:
        return np.zeros((0, params.spec.dim), dtype=np.float64)
    _, v = encode_forward(params, windows)
    return v


def encode_backward(params: TrainableEncoderParams, x: np.ndarray, d_v: np.ndarray):
    """Gradients of a scalar loss through the projection: (dX, dProj)."""
    return d_v @ params.proj.T, x.T @ d_v


def scatter_embedding_grad(buffer: np.ndarray, windows: np.ndarray, d_x: np.ndarray) -> np.ndarray:
    """Accumulate dX blocks into embedding-row gradients; returns touched rows."""
    d_e = buffer.shape[1]
    flat = windows.ravel()
    mask = flat >= 0
    rows = flat[mask]
    np.add.at(buffer, rows, d_x.reshape(-1, d_e)[mask])
    return rows


def write_embedding_sidecar(path: str | Path, dim: int, records: Iterable[tuple[str, int, int, np.ndarray]]) -> None:
    """Line-delimited sidecar: a header declaring the dimension, then one
    record per subword (post id, char_start, char_end, vector).

    Floats round-trip exactly (shortest-repr decimal encoding).
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": int(dim)}) + "\n")
        for post_id, start, end, vec in records:
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise EncoderError(f"sidecar vector for {post_id!r} has shape {vec.shape}, expected ({dim},)")
            record = {"id": post_id, "start": int(start), "end": int(end), "vec": [float(v) for v in vec]}
            fh.write(json.dumps(record) + "\n")


def read_embedding_sidecar(path: str | Path) -> tuple[int, dict[str, list[tuple[int, int, np.ndarray]]]]:
    """Parse a sidecar into (dim, post id -> [(start, end, vector), ...])."""
    by_post: dict[str, list[tuple[int, int, np.ndarray]]] = {}
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            dim = int(header["dim"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EncoderError(f"{path}: missing or malformed sidecar header") from exc
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            record = json.loads(line)
            vec = np.array(record["vec"], dtype=np.float64)
            if vec.shape != (dim,):
                raise EncoderError(
                    f"{path}:{line_no}: vector of dimension {vec.shape[0]} does not match declared {dim}"
                )
            by_post.setdefault(record["id"], []).append((int(record["start"]), int(record["end"]), vec))
    return dim, by_post


def load_precomputed(path: str | Path, dataset: Dataset) -> dict[str, np.ndarray]:
    """Pool sidecar subword vectors onto each post's word tokens by character
    overlap (mean); a token overlapping no subword gets the zero vector.

    Every post of the dataset that has at least one token must appear in the
    sidecar.
    """
    dim, by_post = read_embedding_sidecar(path)
    out: dict[str, np.ndarray] = {}
    for post in dataset:
        tokens = tokenize(post.text)
        if not tokens:
            out[post.id] = np.zeros((0, dim), dtype=np.float64)
            continue
        if post.id not in by_post:
            raise EncoderError(f"post id {post.id!r} missing from sidecar {path}")
        subwords = sorted(by_post[post.id], key=lambda r: (r[0], r[1]))
        vectors = np.zeros((len(tokens), dim), dtype=np.float64)
        for i, tok in enumerate(tokens):
            hits = [vec for start, end, vec in subwords if start < tok.char_end and tok.char_start < end]
            if hits:
                vectors[i] = np.sum(hits, axis=0) / len(hits)
        out[post.id] = vectors
    return out
