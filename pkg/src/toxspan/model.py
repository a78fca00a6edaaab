"""Token classification heads and their training.

Two heads over the same augmented token vectors: an independent per-token
softmax, and a linear-chain CRF whose sequence score is

    start[y_1] + sum_t e[t, y_t] + sum_{t>=2} transitions[y_{t-1}, y_t] + end[y_T].

Both are trained by first-order gradient descent on the exact negative
log-likelihood; CRF gradients come from forward-backward marginals, softmax
gradients from the standard cross-entropy. Decoding is per-token argmax for
the softmax head and Viterbi for the CRF head (ties toward the lower label
index at the final position and at every backpointer).
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import LABEL_NAMES, Dataset, Post, Token, tokenize
from .encoder import (
    EncoderSpec,
    TrainableEncoderParams,
    encode_backward,
    encode_forward,
    init_trainable,
    scatter_embedding_grad,
    token_rows,
    window_rows,
)
from .features import (
    Augmentation,
    TfIdfModel,
    WordList,
    augment_matrix,
    fit_tfidf,
    post_tfidf_weights,
    post_word_list_flags,
)
from .spans import SpanSet, labels_to_spans

BUNDLE_VERSION = 1


class ModelError(ValueError):
    pass


class CompatibilityError(ModelError):
    """A bundle whose fingerprint does not match the requested configuration."""


class HeadKind(str, enum.Enum):
    SOFTMAX = "softmax"
    CRF = "crf"


@dataclass
class ClassifierHead:
    """Fully connected layer: emissions = vectors @ weights + bias."""

    weights: np.ndarray  # (d + k) x L
    bias: np.ndarray  # L

    @classmethod
    def zeros(cls, in_dim: int, n_labels: int = len(LABEL_NAMES)) -> "ClassifierHead":
        return cls(np.zeros((in_dim, n_labels)), np.zeros(n_labels))


@dataclass
class CrfParameters:
    """transitions[i, j] scores label i followed by label j; start/end score
    the first and last label of a sequence."""

    transitions: np.ndarray  # L x L
    start: np.ndarray  # L
    end: np.ndarray  # L

    @classmethod
    def zeros(cls, n_labels: int = len(LABEL_NAMES)) -> "CrfParameters":
        return cls(np.zeros((n_labels, n_labels)), np.zeros(n_labels), np.zeros(n_labels))


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable log-sum-exp over finite scores."""
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def emissions(head: ClassifierHead, vectors: np.ndarray) -> np.ndarray:
    """Score matrix T x L from augmented token vectors."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != head.weights.shape[0]:
        raise ModelError(
            f"vector dimension {vectors.shape} does not match head input {head.weights.shape[0]}"
        )
    return vectors @ head.weights + head.bias


def sequence_score(crf: CrfParameters, e: np.ndarray, y) -> float:
    """Unnormalized path score of one label sequence."""
    y = np.asarray(y, dtype=np.int64)
    t = e.shape[0]
    if y.shape[0] != t:
        raise ModelError(f"label sequence length {y.shape[0]} does not match {t} emission rows")
    score = crf.start[y[0]] + crf.end[y[-1]] + e[np.arange(t), y].sum()
    if t > 1:
        score += crf.transitions[y[:-1], y[1:]].sum()
    return float(score)


def _forward_alphas(crf: CrfParameters, e: np.ndarray) -> np.ndarray:
    t = e.shape[0]
    alphas = np.empty_like(e)
    alphas[0] = crf.start + e[0]
    for i in range(1, t):
        alphas[i] = e[i] + logsumexp(alphas[i - 1][:, None] + crf.transitions, axis=0)
    return alphas


def log_partition(crf: CrfParameters, e: np.ndarray) -> float:
    """log sum over all label sequences of exp(sequence_score), via the
    log-domain forward recursion."""
    if e.shape[0] < 1:
        raise ModelError("need at least one emission row")
    alphas = _forward_alphas(crf, e)
    return float(logsumexp(alphas[-1] + crf.end, axis=0))


def forward_backward(crf: CrfParameters, e: np.ndarray):
    """Exact marginals: (log Z, node marginals T x L, edge marginals (T-1) x L x L)."""
    t, n_labels = e.shape
    alphas = _forward_alphas(crf, e)
    betas = np.empty_like(e)
    betas[-1] = crf.end
    for i in range(t - 2, -1, -1):
        betas[i] = logsumexp(crf.transitions + (e[i + 1] + betas[i + 1])[None, :], axis=1)
    log_z = float(logsumexp(alphas[-1] + crf.end, axis=0))
    node = np.exp(alphas + betas - log_z)
    edge = np.empty((max(t - 1, 0), n_labels, n_labels))
    for i in range(t - 1):
        edge[i] = np.exp(
            alphas[i][:, None] + crf.transitions + (e[i + 1] + betas[i + 1])[None, :] - log_z
        )
    return log_z, node, edge


def crf_loss_grads(crf: CrfParameters, e: np.ndarray, gold) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Negative log-likelihood of the gold sequence and its exact gradients
    (d_emissions, d_transitions, d_start, d_end)."""
    gold = np.asarray(gold, dtype=np.int64)
    t, n_labels = e.shape
    if gold.shape[0] != t:
        raise ModelError(f"gold length {gold.shape[0]} does not match {t} emission rows")
    log_z, node, edge = forward_backward(crf, e)
    loss = log_z - sequence_score(crf, e, gold)
    d_e = node.copy()
    d_e[np.arange(t), gold] -= 1.0
    d_trans = edge.sum(axis=0) if t > 1 else np.zeros((n_labels, n_labels))
    if t > 1:
        np.subtract.at(d_trans, (gold[:-1], gold[1:]), 1.0)
    d_start = node[0].copy()
    d_start[gold[0]] -= 1.0
    d_end = node[-1].copy()
    d_end[gold[-1]] -= 1.0
    return float(loss), d_e, d_trans, d_start, d_end


def softmax_loss_grads(e: np.ndarray, gold) -> tuple[float, np.ndarray]:
    """Per-token cross-entropy summed over the sequence, with its gradient."""
    gold = np.asarray(gold, dtype=np.int64)
    t = e.shape[0]
    if gold.shape[0] != t:
        raise ModelError(f"gold length {gold.shape[0]} does not match {t} emission rows")
    log_norm = logsumexp(e, axis=1)
    loss = float(np.sum(log_norm - e[np.arange(t), gold]))
    d_e = np.exp(e - log_norm[:, None])
    d_e[np.arange(t), gold] -= 1.0
    return loss, d_e


def viterbi(crf: CrfParameters, e: np.ndarray) -> list[int]:
    """Highest-scoring label sequence; ties resolve to the lower label index
    at the final position and at every backpointer."""
    t, n_labels = e.shape
    if t < 1:
        raise ModelError("need at least one emission row")
    delta = crf.start + e[0]
    back = np.zeros((t, n_labels), dtype=np.int64)
    for i in range(1, t):
        scores = delta[:, None] + crf.transitions
        back[i] = np.argmax(scores, axis=0)
        delta = e[i] + np.max(scores, axis=0)
    labels = [int(np.argmax(delta + crf.end))]
    for i in range(t - 1, 0, -1):
        labels.append(int(back[i, labels[-1]]))
    return labels[::-1]


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 13
    epochs: int = 6
    step_size: float = 0.5
    batch_size: int = 8
    augmentation: Augmentation = Augmentation.NONE
    head: HeadKind = HeadKind.SOFTMAX
    encoder: EncoderSpec = field(default_factory=lambda: EncoderSpec("trainable"))

    def __post_init__(self):
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")
        if self.step_size < 0:
            raise ModelError("step size must be non-negative")
        if self.batch_size < 1:
            raise ModelError("batch size must be >= 1")


@dataclass
class CompiledPost:
    """Per-post tensors fixed for the whole training run."""

    post: Post
    tokens: list[Token]
    gold: Optional[np.ndarray]
    windows: Optional[np.ndarray]  # trainable encoder input rows
    vectors: Optional[np.ndarray]  # precomputed vectors
    tfidf: Optional[np.ndarray]
    flags: Optional[np.ndarray]


def compile_posts(
    dataset: Dataset,
    mode: Augmentation,
    encoder_spec: EncoderSpec,
    tfidf_model: Optional[TfIdfModel],
    word_list: Optional[WordList],
    embeddings: Optional[dict[str, np.ndarray]],
    require_gold: bool,
) -> list[CompiledPost]:
    from .corpus import labels_from_offsets

    out = []
    for post in dataset:
        tokens = tokenize(post.text)
        gold = None
        if require_gold:
            if post.gold_offsets is None:
                raise ModelError(f"post {post.id!r} lacks gold offsets required for training")
            gold = np.array(labels_from_offsets(tokens, post.gold_offsets), dtype=np.int64)
        windows = vectors = None
        if encoder_spec.kind == "trainable":
            rows = token_rows(tokens, encoder_spec.table_size)
            windows = window_rows(rows, encoder_spec.window)
        else:
            if embeddings is None or post.id not in embeddings:
                raise ModelError(f"no precomputed embeddings for post {post.id!r}")
            vectors = embeddings[post.id]
            if vectors.shape != (len(tokens), encoder_spec.dim):
                raise ModelError(
                    f"embeddings for post {post.id!r} have shape {vectors.shape}, "
                    f"expected ({len(tokens)}, {encoder_spec.dim})"
                )
        tfidf = post_tfidf_weights(tfidf_model, tokens) if mode.uses_tfidf else None
        flags = post_word_list_flags(word_list, tokens) if mode.uses_wordlist else None
        out.append(CompiledPost(post, tokens, gold, windows, vectors, tfidf, flags))
    return out


def _post_vectors(cp: CompiledPost, enc: Optional[TrainableEncoderParams]):
    """Base vectors plus (for the trainable encoder) the gathered window matrix."""
    if cp.vectors is not None:
        return None, cp.vectors
    return encode_forward(enc, cp.windows)


def _augmented(cp: CompiledPost, v: np.ndarray, mode: Augmentation) -> np.ndarray:
    return augment_matrix(v, cp.tfidf, cp.flags, mode)


def post_loss_and_grads(
    cp: CompiledPost,
    head: ClassifierHead,
    crf: Optional[CrfParameters],
    enc: Optional[TrainableEncoderParams],
    mode: Augmentation,
):
    """Loss for one post plus gradients for every trainable parameter.

    Returns (loss, grads) where grads maps: head_w, head_b, and when present
    trans/start/end, proj, plus (windows, d_x) for embedding-row scatter.
    """
    x, v = _post_vectors(cp, enc)
    a = _augmented(cp, v, mode)
    e = emissions(head, a)
    if crf is not None:
        loss, d_e, d_trans, d_start, d_end = crf_loss_grads(crf, e, cp.gold)
    else:
        loss, d_e = softmax_loss_grads(e, cp.gold)
    grads = {
        "head_w": a.T @ d_e,
        "head_b": d_e.sum(axis=0),
    }
    if crf is not None:
        grads.update(trans=d_trans, start=d_start, end=d_end)
    if enc is not None:
        d_a = d_e @ head.weights.T
        d_v = d_a[:, : enc.spec.dim]
        d_x, d_proj = encode_backward(enc, x, d_v)
        grads.update(proj=d_proj, d_x=d_x, windows=cp.windows)
    return loss, grads


def _decode(head: ClassifierHead, crf: Optional[CrfParameters], e: np.ndarray) -> list[int]:
    if e.shape[0] == 0:
        return []
    if crf is not None:
        return viterbi(crf, e)
    return [int(i) for i in np.argmax(e, axis=1)]


@dataclass
class ModelBundle:
    """Everything needed to reproduce predictions: parameters, feature models,
    and the configuration fingerprint they were trained under."""

    config: TrainConfig
    head: ClassifierHead
    crf: Optional[CrfParameters]
    encoder_params: Optional[TrainableEncoderParams]
    tfidf: Optional[TfIdfModel]
    word_list: Optional[WordList]
    labels: tuple[str, ...] = LABEL_NAMES
    best_epoch: int = 0
    val_f1: float = 0.0

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.config)


def config_fingerprint(config: TrainConfig) -> str:
    """Hash of the model-shaping configuration (augmentation, head, encoder,
    label order); training hyperparameters do not affect compatibility."""
    payload = {
        "version": BUNDLE_VERSION,
        "labels": list(LABEL_NAMES),
        "augmentation": config.augmentation.value,
        "head": config.head.value,
        "encoder": config.encoder.to_record(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def predict(bundle: ModelBundle, post: Post, embeddings: Optional[dict[str, np.ndarray]] = None) -> list[int]:
    """Label sequence for one post: per-token argmax (softmax) or Viterbi (CRF)."""
    ds = Dataset((post,))
    cp = compile_posts(
        ds, bundle.config.augmentation, bundle.config.encoder,
        bundle.tfidf, bundle.word_list, embeddings, require_gold=False,
    )[0]
    if not cp.tokens:
        return []
    _, v = _post_vectors(cp, bundle.encoder_params)
    e = emissions(bundle.head, _augmented(cp, v, bundle.config.augmentation))
    return _decode(bundle.head, bundle.crf, e)


def predict_spans(bundle: ModelBundle, post: Post, embeddings=None) -> SpanSet:
    tokens = tokenize(post.text)
    labels = predict(bundle, post, embeddings)
    return labels_to_spans(tokens, labels, post.text)


@dataclass
class TrainResult:
    bundle: ModelBundle
    best_epoch: int
    best_val_f1: float
    history: list[float]  # validation macro span-F1 per epoch


def _validation_f1(
    compiled_val: list[CompiledPost],
    head: ClassifierHead,
    crf: Optional[CrfParameters],
    enc: Optional[TrainableEncoderParams],
    mode: Augmentation,
) -> float:
    from .evaluation import span_f1

    if not compiled_val:
        return 0.0
    total = 0.0
    for cp in compiled_val:
        if cp.tokens:
            _, v = _post_vectors(cp, enc)
            e = emissions(head, _augmented(cp, v, mode))
            labels = _decode(head, crf, e)
            pred = labels_to_spans(cp.tokens, labels, cp.post.text)
        else:
            pred = SpanSet.from_offsets(())
        gold = SpanSet.from_offsets(cp.post.gold_offsets)
        total += span_f1(gold, pred)[2]
    return total / len(compiled_val)


def train(
    config: TrainConfig,
    train_ds: Dataset,
    validation_ds: Dataset,
    word_list: Optional[WordList] = None,
    embeddings: Optional[dict[str, np.ndarray]] = None,
) -> TrainResult:
    """Mini-batch SGD on the configured loss; deterministic given the seed.

    Head and CRF parameters start at zero; trainable encoder parameters are
    drawn uniform in [-0.1, 0.1] from the seeded stream. Returns the
    parameters of the epoch with the best validation macro span-F1 (ties to
    the earliest epoch).
    """
    if len(train_ds) == 0:
        raise ModelError("empty training set")
    mode = config.augmentation
    if mode.uses_wordlist and word_list is None:
        raise ModelError("augmentation mode requires a word list")
    tfidf_model = fit_tfidf(train_ds) if mode.uses_tfidf else None

    spec = config.encoder
    compiled_train = compile_posts(train_ds, mode, spec, tfidf_model, word_list, embeddings, require_gold=True)
    compiled_val = compile_posts(validation_ds, mode, spec, tfidf_model, word_list, embeddings, require_gold=True)

    trainable = spec.kind == "trainable"
    seed_seq = np.random.SeedSequence(config.seed)
    init_ss, shuffle_ss = seed_seq.spawn(2)
    enc = init_trainable(spec, init_ss) if trainable else None
    head = ClassifierHead.zeros(spec.dim + mode.width)
    crf = CrfParameters.zeros() if config.head == HeadKind.CRF else None
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))

    emb_grad = np.zeros_like(enc.emb) if trainable else None
    best: Optional[tuple[int, float, ClassifierHead, Optional[CrfParameters], Optional[TrainableEncoderParams]]] = None
    history: list[float] = []

    n = len(compiled_train)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = [compiled_train[i] for i in order[lo : lo + config.batch_size]]
            g_w = np.zeros_like(head.weights)
            g_b = np.zeros_like(head.bias)
            g_crf = CrfParameters.zeros() if crf is not None else None
            g_proj = np.zeros_like(enc.proj) if trainable else None
            touched: list[np.ndarray] = []
            for cp in batch:
                if not cp.tokens:
                    continue
                _, grads = post_loss_and_grads(cp, head, crf, enc, mode)
                g_w += grads["head_w"]
                g_b += grads["head_b"]
                if crf is not None:
                    g_crf.transitions += grads["trans"]
                    g_crf.start += grads["start"]
                    g_crf.end += grads["end"]
                if trainable:
                    g_proj += grads["proj"]
                    touched.append(scatter_embedding_grad(emb_grad, grads["windows"], grads["d_x"]))
            scale = config.step_size / len(batch)
            head.weights -= scale * g_w
            head.bias -= scale * g_b
            if crf is not None:
                crf.transitions -= scale * g_crf.transitions
                crf.start -= scale * g_crf.start
                crf.end -= scale * g_crf.end
            if trainable:
                enc.proj -= scale * g_proj
                if touched:
                    rows = np.unique(np.concatenate(touched))
                    enc.emb[rows] -= scale * emb_grad[rows]
                    emb_grad[rows] = 0.0
        f1 = _validation_f1(compiled_val, head, crf, enc, mode)
        history.append(f1)
        if best is None or f1 > best[1]:
            best = (
                epoch,
                f1,
                copy.deepcopy(head),
                copy.deepcopy(crf),
                copy.deepcopy(enc),
            )

    best_epoch, best_f1, head, crf, enc = best
    bundle = ModelBundle(
        config=config,
        head=head,
        crf=crf,
        encoder_params=enc,
        tfidf=tfidf_model,
        word_list=word_list if mode.uses_wordlist else None,
        best_epoch=best_epoch,
        val_f1=best_f1,
    )
    return TrainResult(bundle, best_epoch, best_f1, history)


@dataclass
class SweepResult:
    rows: list[tuple[int, float]]  # (seed, validation macro span-F1) in seed order
    best_seed: int
    best: TrainResult

    @property
    def f1_min(self) -> float:
        return min(f1 for _, f1 in self.rows)

    @property
    def f1_max(self) -> float:
        return max(f1 for _, f1 in self.rows)

    @property
    def f1_range(self) -> float:
        return self.f1_max - self.f1_min


def seed_sweep(
    config: TrainConfig,
    seeds: list[int],
    train_ds: Dataset,
    validation_ds: Dataset,
    word_list: Optional[WordList] = None,
    embeddings: Optional[dict[str, np.ndarray]] = None,
) -> SweepResult:
    """Train once per seed; keep the best validation F1, ties to the earliest
    seed in list order."""
    if not seeds:
        raise ModelError("seed list must be nonempty")
    rows: list[tuple[int, float]] = []
    best: Optional[tuple[int, TrainResult]] = None
    for seed in seeds:
        result = train(replace(config, seed=seed), train_ds, validation_ds, word_list, embeddings)
        rows.append((seed, result.best_val_f1))
        if best is None or result.best_val_f1 > best[1].best_val_f1:
            best = (seed, result)
    return SweepResult(rows, best[0], best[1])


# ---------------------------------------------------------------------------
# Bundle persistence


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    """Write a versioned npz container; byte-identical for identical bundles."""
    manifest = {
        "version": BUNDLE_VERSION,
        "fingerprint": bundle.fingerprint,
        "labels": list(bundle.labels),
        "augmentation": bundle.config.augmentation.value,
        "head": bundle.config.head.value,
        "encoder": bundle.config.encoder.to_record(),
        "train": {
            "seed": bundle.config.seed,
            "epochs": bundle.config.epochs,
            "step_size": bundle.config.step_size,
            "batch_size": bundle.config.batch_size,
        },
        "tfidf": bundle.tfidf.to_record() if bundle.tfidf is not None else None,
        "word_list": bundle.word_list.to_record() if bundle.word_list is not None else None,
        "best_epoch": bundle.best_epoch,
        "val_f1": bundle.val_f1,
    }
    arrays = {
        "manifest": np.array(json.dumps(manifest, sort_keys=True)),
        "head_w": bundle.head.weights,
        "head_b": bundle.head.bias,
    }
    if bundle.crf is not None:
        arrays.update(crf_trans=bundle.crf.transitions, crf_start=bundle.crf.start, crf_end=bundle.crf.end)
    if bundle.encoder_params is not None:
        arrays.update(enc_emb=bundle.encoder_params.emb, enc_proj=bundle.encoder_params.proj)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bundle(path: str | Path) -> ModelBundle:
    """Load and verify a bundle container; a stale or tampered fingerprint is an error."""
    data = np.load(path, allow_pickle=False)
    manifest = json.loads(str(data["manifest"]))
    if manifest.get("version") != BUNDLE_VERSION:
        raise ModelError(f"unsupported bundle version {manifest.get('version')!r}")
    config = TrainConfig(
        seed=manifest["train"]["seed"],
        epochs=manifest["train"]["epochs"],
        step_size=manifest["train"]["step_size"],
        batch_size=manifest["train"]["batch_size"],
        augmentation=Augmentation(manifest["augmentation"]),
        head=HeadKind(manifest["head"]),
        encoder=EncoderSpec.from_record(manifest["encoder"]),
    )
    if config_fingerprint(config) != manifest["fingerprint"]:
        raise CompatibilityError("bundle fingerprint does not match its stored configuration")
    head = ClassifierHead(data["head_w"], data["head_b"])
    crf = None
    if config.head == HeadKind.CRF:
        crf = CrfParameters(data["crf_trans"], data["crf_start"], data["crf_end"])
    enc = None
    if config.encoder.kind == "trainable":
        enc = TrainableEncoderParams(config.encoder, data["enc_emb"], data["enc_proj"])
    tfidf = TfIdfModel.from_record(manifest["tfidf"]) if manifest["tfidf"] is not None else None
    word_list = WordList.from_record(manifest["word_list"]) if manifest["word_list"] is not None else None
    return ModelBundle(
        config=config,
        head=head,
        crf=crf,
        encoder_params=enc,
        tfidf=tfidf,
        word_list=word_list,
        labels=tuple(manifest["labels"]),
        best_epoch=manifest["best_epoch"],
        val_f1=manifest["val_f1"],
    )
