"""Acceptance suite: every criterion runs at its stated tolerance and prints
one pass/fail line (run with `pytest tests/test_acceptance.py -v -s`)."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    enum_log_partition,
    enum_viterbi,
    finite_difference,
    gradient_close,
    perchar_f1,
)
from toxspan.cli import main
from toxspan.corpus import Dataset, Post, labels_from_offsets, tokenize
from toxspan.encoder import EncoderSpec, init_trainable, scatter_embedding_grad
from toxspan.evaluation import macro_f1, span_f1
from toxspan.features import Augmentation, TfIdfModel, WordList
from toxspan.model import (
    ClassifierHead,
    CrfParameters,
    HeadKind,
    TrainConfig,
    compile_posts,
    crf_loss_grads,
    log_partition,
    post_loss_and_grads,
    predict_spans,
    train,
    viterbi,
)
from toxspan.spans import SpanSet, labels_to_spans
from toxspan.synth import generate_corpus

FIXTURES = Path(__file__).parent / "fixtures" / "pairwise"


def _report(criterion: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {criterion}: PASS{suffix}")


def random_instance(rng, max_t=6, max_labels=3, lo=-5.0, hi=5.0):
    n_labels = int(rng.integers(2, max_labels + 1))
    t = int(rng.integers(1, max_t + 1))
    crf = CrfParameters(
        transitions=rng.uniform(lo, hi, size=(n_labels, n_labels)),
        start=rng.uniform(lo, hi, size=n_labels),
        end=rng.uniform(lo, hi, size=n_labels),
    )
    e = rng.uniform(lo, hi, size=(t, n_labels))
    return crf, e


def test_criterion_1_partition_oracle():
    rng = np.random.Generator(np.random.PCG64(1001))
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        crf, e = random_instance(rng)
        gap = abs(log_partition(crf, e) - enum_log_partition(crf.transitions, crf.start, crf.end, e))
        worst = max(worst, gap)
        assert gap <= 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    _report("1 partition oracle", f"500 instances, worst gap {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_gradient_checks():
    rng = np.random.Generator(np.random.PCG64(1002))
    spec = EncoderSpec("trainable", dim=4, table_size=32, embed_dim=3, window=1)
    tfidf = TfIdfModel({"alpha": 2, "beta": 1, "gamma": 1}, 3)
    word_list = WordList(frozenset({"beta", "gamma"}))
    vocab = ["alpha", "beta", "gamma", "delta", "echo"]
    modes = list(Augmentation)
    start = time.perf_counter()
    for i in range(100):
        # pure CRF gradients on a random instance: emissions, transitions, start, end
        crf, e = random_instance(rng, lo=-1.5, hi=1.5)
        gold = rng.integers(0, e.shape[1], size=e.shape[0]).tolist()

        def crf_loss():
            return crf_loss_grads(crf, e, gold)[0]

        _, d_e, d_trans, d_start, d_end = crf_loss_grads(crf, e, gold)
        assert gradient_close(d_e, finite_difference(crf_loss, e))
        assert gradient_close(d_trans, finite_difference(crf_loss, crf.transitions))
        assert gradient_close(d_start, finite_difference(crf_loss, crf.start))
        assert gradient_close(d_end, finite_difference(crf_loss, crf.end))

        # full-pipeline gradients: head and trainable encoder, both head kinds
        mode = modes[i % len(modes)]
        n_tokens = int(rng.integers(1, 6))
        words = [vocab[int(rng.integers(len(vocab)))] for _ in range(n_tokens)]
        text = " ".join(words)
        gold_offsets = frozenset(
            off for tok, keep in zip(tokenize(text), rng.random(n_tokens) < 0.5)
            if keep for off in range(tok.char_start, tok.char_end)
        )
        ds = Dataset((Post("g", text, gold_offsets),))
        cp = compile_posts(ds, mode, spec, tfidf, word_list, None, require_gold=True)[0]
        enc = init_trainable(spec, 5000 + i)
        head = ClassifierHead(
            rng.normal(scale=0.5, size=(spec.dim + mode.width, 2)),
            rng.normal(scale=0.5, size=2),
        )
        pipeline_crf = None
        if i % 2 == 0:
            pipeline_crf = CrfParameters(
                rng.normal(scale=0.5, size=(2, 2)),
                rng.normal(scale=0.5, size=2),
                rng.normal(scale=0.5, size=2),
            )

        def pipe_loss():
            return post_loss_and_grads(cp, head, pipeline_crf, enc, mode)[0]

        _, grads = post_loss_and_grads(cp, head, pipeline_crf, enc, mode)
        d_emb = np.zeros_like(enc.emb)
        scatter_embedding_grad(d_emb, grads["windows"], grads["d_x"])
        assert gradient_close(grads["head_w"], finite_difference(pipe_loss, head.weights))
        assert gradient_close(grads["head_b"], finite_difference(pipe_loss, head.bias))
        assert gradient_close(grads["proj"], finite_difference(pipe_loss, enc.proj))
        assert gradient_close(d_emb, finite_difference(pipe_loss, enc.emb))
        if pipeline_crf is not None:
            assert gradient_close(grads["trans"], finite_difference(pipe_loss, pipeline_crf.transitions))
            assert gradient_close(grads["start"], finite_difference(pipe_loss, pipeline_crf.start))
            assert gradient_close(grads["end"], finite_difference(pipe_loss, pipeline_crf.end))
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    _report("2 gradient checks", f"100 instances, {elapsed:.1f}s")


def test_criterion_3_viterbi_oracle():
    rng = np.random.Generator(np.random.PCG64(1003))
    for _ in range(500):
        crf, e = random_instance(rng)
        assert viterbi(crf, e) == enum_viterbi(crf.transitions, crf.start, crf.end, e)
    _report("3 viterbi oracle", "500 instances, exact match")


def test_criterion_4_metric_oracle():
    assert span_f1(SpanSet.from_offsets(()), SpanSet.from_offsets(())) == (1.0, 1.0, 1.0)
    assert span_f1(SpanSet.from_offsets(range(4)), SpanSet.from_offsets(range(4)))[2] == 1.0
    assert span_f1(SpanSet.from_offsets({0, 1, 2, 3}), SpanSet.from_offsets({2, 3, 4, 5})) == (0.5, 0.5, 0.5)

    rng = np.random.Generator(np.random.PCG64(1004))
    posts = []
    preds = {}
    for i in range(1000):
        n = int(rng.integers(1, 60))
        text = "".join(rng.choice(list("abc x")) for _ in range(n))
        gold = {int(v) for v in rng.integers(0, n, size=rng.integers(0, n))}
        posts.append(Post(str(i), text, frozenset(gold)))
        preds[str(i)] = SpanSet.from_offsets(
            {int(v) for v in rng.integers(0, n, size=rng.integers(0, n))}
        )
    ds = Dataset(tuple(posts))
    ours = macro_f1(ds, preds).macro_f1
    naive = sum(
        perchar_f1(p.text, set(p.gold_offsets), set(preds[p.id].offsets)) for p in ds
    ) / len(ds)
    assert abs(ours - naive) <= 1e-12
    _report("4 metric oracle", f"1000 posts, |diff| = {abs(ours - naive):.1e}")


def test_criterion_5_pairwise_fixture(tmp_path, capsys):
    report = tmp_path / "cmp.jsonl"
    code = main([
        "compare",
        "--gold", str(FIXTURES / "gold.csv"),
        "--a", str(FIXTURES / "preds_a.tsv"),
        "--b", str(FIXTURES / "preds_b.tsv"),
        "--report", str(report),
    ])
    out = capsys.readouterr().out
    assert code == 0
    records = [json.loads(line) for line in report.read_text().splitlines()]
    matrix_a = next(r for r in records if r["kind"] == "matrix" and r["model"] == "a")
    matrix_b = next(r for r in records if r["kind"] == "matrix" and r["model"] == "b")
    delta = next(r for r in records if r["kind"] == "delta")
    assert (matrix_a["tn"], matrix_a["fp"], matrix_a["fn"], matrix_a["tp"]) == (202, 1466, 682, 1829)
    assert (matrix_b["tn"], matrix_b["fp"], matrix_b["fn"], matrix_b["tp"]) == (310, 1358, 692, 1819)
    assert delta["tn"] == 108 and delta["fp"] == -108
    assert "delta (B - A): tn +108, fp -108" in out
    _report("5 pairwise fixture", "matrices {202,1466,682,1829} / {310,1358,692,1819}")


def _heldout_f1(config: TrainConfig, corpus, word_list=None) -> float:
    result = train(config, corpus.train, corpus.validation, word_list=word_list)
    preds = {p.id: predict_spans(result.bundle, p) for p in corpus.test}
    return macro_f1(corpus.test, preds).macro_f1


def test_criterion_6_desk_scale_learning():
    corpus = generate_corpus(seed=13, n_posts=2000, vocab_size=500, lexicon_size=30)
    seeds = [1, 2, 3, 4, 5]

    start = time.perf_counter()
    baseline_scores = [_heldout_f1(TrainConfig(seed=s), corpus) for s in seeds]
    baseline_elapsed = time.perf_counter() - start
    baseline = sum(baseline_scores) / len(seeds)
    assert baseline_elapsed < 300.0
    assert baseline >= 0.90

    wordlist_scores = [
        _heldout_f1(TrainConfig(seed=s, augmentation=Augmentation.WORDLIST), corpus,
                    word_list=corpus.lexicon)
        for s in seeds
    ]
    lexicon_informed = sum(wordlist_scores) / len(seeds)
    assert lexicon_informed >= 0.97
    assert lexicon_informed >= baseline
    _report(
        "6 desk-scale learning",
        f"baseline {baseline:.5f} in {baseline_elapsed:.0f}s, +wordlist {lexicon_informed:.5f}",
    )


def test_criterion_7_sweep_determinism(tmp_path, capsys):
    import re

    corpus = generate_corpus(seed=29, n_posts=240, vocab_size=120, lexicon_size=12)
    from toxspan.corpus import write_dataset_csv

    train_csv, val_csv = tmp_path / "train.csv", tmp_path / "val.csv"
    write_dataset_csv(corpus.train, train_csv)
    write_dataset_csv(corpus.validation, val_csv)

    outputs = []
    for run_no in (1, 2):
        bundle = tmp_path / f"best{run_no}.npz"
        table = tmp_path / f"table{run_no}.jsonl"
        code = main([
            "sweep", "--train", str(train_csv), "--validation", str(val_csv),
            "--seeds", "1,2,3,4,5", "--epochs", "2", "--step-size", "0.5",
            "--batch-size", "8", "--dim", "32", "--embed-dim", "16", "--window", "2",
            "--table-size", "4096", "--out", str(bundle), "--table", str(table),
        ])
        stdout = capsys.readouterr().out
        assert code == 0
        # drop the echoed output paths, which differ between runs by construction
        report = "\n".join(line for line in stdout.splitlines() if "->" not in line)
        outputs.append((bundle.read_bytes(), table.read_bytes(), report))
    assert outputs[0][0] == outputs[1][0], "best bundles differ between identical runs"
    assert outputs[0][1] == outputs[1][1], "per-seed tables differ between identical runs"
    assert outputs[0][2] == outputs[1][2]
    match = re.search(r"range (\d\.\d{5}) \(\d\.\d{5} to \d\.\d{5}\)", outputs[0][2])
    assert match, outputs[0][2]
    _report("7 sweep determinism", f"bit-identical bundles, range {match.group(1)}")


def test_criterion_8_invariant_suite():
    rng = np.random.Generator(np.random.PCG64(1008))

    # CRF with zero transitions/start/end decodes exactly like softmax argmax
    zero_crf = CrfParameters.zeros()
    for _ in range(200):
        e = rng.uniform(-4, 4, size=(int(rng.integers(1, 9)), 2))
        assert viterbi(zero_crf, e) == [int(v) for v in np.argmax(e, axis=1)]

    # per-row emission shifts move log Z by their sum and never change the argmax
    for _ in range(200):
        crf, e = random_instance(rng)
        shifts = rng.uniform(-3, 3, size=e.shape[0])
        shifted = e + shifts[:, None]
        assert abs(log_partition(crf, shifted) - log_partition(crf, e) - shifts.sum()) <= 1e-8
        assert viterbi(crf, shifted) == viterbi(crf, e)

    # decode then re-project: token labels survive the span round trip
    words = ["aa", "bb", "ccc", "d", "e'f", "gg"]
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        pieces = []
        for i in range(n):
            word = words[int(rng.integers(len(words)))]
            if rng.random() < 0.2:
                word += "," if rng.random() < 0.5 else "!"
            pieces.append(word)
        text = " ".join(pieces)
        tokens = tokenize(text)
        labels = rng.integers(0, 2, size=len(tokens)).tolist()
        spans = labels_to_spans(tokens, labels, text)
        assert labels_from_offsets(tokens, spans.offsets) == labels
    _report("8 invariant suite", "zero-CRF equivalence, shift invariance, span round trip")
