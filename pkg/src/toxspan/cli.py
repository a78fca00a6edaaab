"""Command-line pipeline: synth, fit-features, train, sweep, predict, evaluate, compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import (
    CorpusError,
    Dataset,
    labels_from_offsets,
    parse_dataset,
    tokenize,
)
from .encoder import EncoderError, EncoderSpec, load_precomputed
from .evaluation import (
    EvalError,
    filtered_pairwise_comparison,
    format_f1,
    macro_f1,
    render_records,
    render_report,
)
from .features import Augmentation, FeatureError, fit_tfidf, load_word_list
from .model import (
    CompatibilityError,
    HeadKind,
    ModelError,
    TrainConfig,
    config_fingerprint,
    load_bundle,
    predict_spans,
    save_bundle,
    seed_sweep,
    train,
)
from .spans import read_predictions, write_predictions
from .synth import generate_corpus, write_corpus

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_COMPAT = 3


def default_word_list_path() -> Path:
    return Path(__file__).parent / "data" / "word_list.txt"


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"{what} path does not exist: {path}")
    return path


def _load_config_file(path) -> dict:
    with open(_require_file(path, "config")) as fh:
        cfg = json.load(fh)
    if cfg.get("version") != CONFIG_VERSION:
        raise CorpusError(f"unsupported config version {cfg.get('version')!r} in {path}")
    return cfg


_CONFIG_KEYS = {
    "train", "validation", "word_list", "embeddings", "augmentation", "head",
    "encoder", "seed", "epochs", "step_size", "batch_size", "seeds",
}


def _merge_config(args) -> dict:
    """File config first, explicit flags override it."""
    cfg: dict = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        cfg.update({k: v for k, v in file_cfg.items() if k in _CONFIG_KEYS})
    flag_map = {
        "train": "train", "validation": "validation", "word_list": "word_list",
        "embeddings": "embeddings", "mode": "augmentation", "head": "head",
        "seed": "seed", "epochs": "epochs", "step_size": "step_size",
        "batch_size": "batch_size", "seeds": "seeds",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    enc_cfg = dict(cfg.get("encoder") or {})
    for flag, key in (("encoder_kind", "kind"), ("dim", "dim"), ("embed_dim", "embed_dim"),
                      ("window", "window"), ("table_size", "table_size")):
        value = getattr(args, flag, None)
        if value is not None:
            enc_cfg[key] = value
    if enc_cfg:
        cfg["encoder"] = enc_cfg
    return cfg


def _train_config(cfg: dict) -> TrainConfig:
    enc_cfg = dict(cfg.get("encoder") or {})
    enc_cfg.setdefault("kind", "trainable")
    kwargs = {}
    for key in ("seed", "epochs", "step_size", "batch_size"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "augmentation" in cfg:
        kwargs["augmentation"] = Augmentation(cfg["augmentation"])
    if "head" in cfg:
        kwargs["head"] = HeadKind(cfg["head"])
    kwargs["encoder"] = EncoderSpec.from_record(enc_cfg)
    return TrainConfig(**kwargs)


def _load_train_inputs(cfg: dict):
    for key in ("train", "validation"):
        if key not in cfg:
            raise CorpusError(f"missing {key!r} dataset (set it in the config file or via --{key})")
    train_ds = parse_dataset(_require_file(cfg["train"], "train"), has_gold=True, split_name="train")
    val_ds = parse_dataset(_require_file(cfg["validation"], "validation"), has_gold=True,
                           split_name="validation")
    config = _train_config(cfg)
    word_list = None
    if config.augmentation.uses_wordlist:
        wl_path = cfg.get("word_list") or default_word_list_path()
        word_list = load_word_list(_require_file(wl_path, "word list"))
    embeddings = None
    if config.encoder.kind == "precomputed":
        if not cfg.get("embeddings"):
            raise CorpusError("precomputed encoder requires an embeddings sidecar path")
        sidecar = _require_file(cfg["embeddings"], "embeddings")
        embeddings = load_precomputed(sidecar, train_ds)
        embeddings.update(load_precomputed(sidecar, val_ds))
    return config, train_ds, val_ds, word_list, embeddings


def cmd_synth(args) -> int:
    corpus = generate_corpus(
        seed=args.seed, n_posts=args.posts, vocab_size=args.vocab,
        lexicon_size=args.lexicon_size, toxic_rate=args.toxic_rate,
    )
    paths = write_corpus(corpus, args.outdir)
    for name in ("train", "validation", "test"):
        ds = getattr(corpus, name)
        toxic = sum(1 for post in ds if post.gold_offsets)
        print(f"{name}: {len(ds)} posts ({toxic} with toxic spans) -> {paths[name]}")
    print(f"lexicon: {len(corpus.lexicon.terms)} terms -> {paths['lexicon']}")
    return EXIT_OK


def cmd_fit_features(args) -> int:
    dataset = parse_dataset(_require_file(args.train, "train"), has_gold=True)
    tfidf = fit_tfidf(dataset)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(tfidf.to_record(), fh, sort_keys=True)
        fh.write("\n")
    print(f"tf-idf: {len(tfidf.df)} terms over {tfidf.n_docs} posts -> {args.output}")
    if args.word_list:
        word_list = load_word_list(_require_file(args.word_list, "word list"))
        print(f"word list: {len(word_list.terms)} terms ok")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _merge_config(args)
    config, train_ds, val_ds, word_list, embeddings = _load_train_inputs(cfg)
    result = train(config, train_ds, val_ds, word_list, embeddings)
    save_bundle(result.bundle, args.out)
    print(f"validation macro F1 {format_f1(result.best_val_f1)} (epoch {result.best_epoch})")
    print(f"bundle -> {args.out}")
    if args.figures:
        from .plots import save_training_history

        figdir = Path(args.figures)
        figdir.mkdir(parents=True, exist_ok=True)
        print(f"figure -> {save_training_history(result.history, figdir / 'train_history.png')}")
    return EXIT_OK


def _parse_seeds(raw) -> list[int]:
    if isinstance(raw, list):
        return [int(s) for s in raw]
    try:
        seeds = [int(part) for part in str(raw).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise CorpusError(f"malformed seed list {raw!r}") from exc
    if not seeds:
        raise CorpusError("seed list must be nonempty")
    return seeds


def cmd_sweep(args) -> int:
    cfg = _merge_config(args)
    if "seeds" not in cfg:
        raise CorpusError("sweep requires a seed list (config 'seeds' or --seeds)")
    seeds = _parse_seeds(cfg["seeds"])
    config, train_ds, val_ds, word_list, embeddings = _load_train_inputs(cfg)
    result = seed_sweep(config, seeds, train_ds, val_ds, word_list, embeddings)
    for seed, f1 in result.rows:
        print(f"seed {seed:>6}  validation macro F1 {format_f1(f1)}")
    print(f"range {format_f1(result.f1_range)} ({format_f1(result.f1_min)} to {format_f1(result.f1_max)})")
    print(f"best seed {result.best_seed} (validation macro F1 {format_f1(result.best.best_val_f1)})")
    save_bundle(result.best.bundle, args.out)
    print(f"bundle -> {args.out}")
    if args.table:
        with open(args.table, "w", encoding="utf-8") as fh:
            for seed, f1 in result.rows:
                fh.write(json.dumps({"kind": "seed", "seed": seed, "f1": f1}, sort_keys=True) + "\n")
            fh.write(json.dumps(
                {"kind": "range", "min": result.f1_min, "max": result.f1_max,
                 "range": result.f1_range, "best_seed": result.best_seed},
                sort_keys=True) + "\n")
        print(f"table -> {args.table}")
    if args.figures:
        from .plots import save_seed_chart

        figdir = Path(args.figures)
        figdir.mkdir(parents=True, exist_ok=True)
        print(f"figure -> {save_seed_chart(result.rows, figdir / 'sweep_seeds.png')}")
    return EXIT_OK


def cmd_predict(args) -> int:
    bundle = load_bundle(_require_file(args.bundle, "bundle"))
    if args.config:
        cfg = _merge_config(args)
        expected = config_fingerprint(_train_config(cfg))
        if expected != bundle.fingerprint:
            raise CompatibilityError(
                f"bundle fingerprint {bundle.fingerprint[:12]} does not match configured {expected[:12]}"
            )
    dataset = parse_dataset(_require_file(args.input, "input"), has_gold=False)
    embeddings = None
    if bundle.config.encoder.kind == "precomputed":
        if not args.embeddings:
            raise CorpusError("bundle uses precomputed embeddings; pass --embeddings")
        embeddings = load_precomputed(_require_file(args.embeddings, "embeddings"), dataset)
    rows = [(post.id, predict_spans(bundle, post, embeddings)) for post in dataset]
    write_predictions(args.output, rows)
    print(f"{len(rows)} predictions -> {args.output}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    dataset = parse_dataset(_require_file(args.gold, "gold"), has_gold=True)
    predictions = read_predictions(_require_file(args.predictions, "predictions"))
    result = macro_f1(dataset, predictions)
    sys.stdout.write(render_report(result, per_post=args.per_post))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("\n".join(render_records(result)) + "\n")
        print(f"report -> {args.report}")
    if args.figures:
        from .plots import save_f1_histogram

        figdir = Path(args.figures)
        figdir.mkdir(parents=True, exist_ok=True)
        print(f"figure -> {save_f1_histogram(result, figdir / 'f1_histogram.png')}")
    return EXIT_OK


def _token_streams(dataset: Dataset, preds: dict, which: str):
    labels = []
    for post in dataset:
        if post.id not in preds:
            raise EvalError(f"missing {which} prediction for id {post.id!r}")
        tokens = tokenize(post.text)
        labels.extend(labels_from_offsets(tokens, preds[post.id].offsets))
    return labels


def cmd_compare(args) -> int:
    dataset = parse_dataset(_require_file(args.gold, "gold"), has_gold=True)
    preds_a = read_predictions(_require_file(args.a, "predictions A"))
    preds_b = read_predictions(_require_file(args.b, "predictions B"))
    gold_labels: list[int] = []
    meta: list[tuple[str, str, int]] = []
    for post in dataset:
        tokens = tokenize(post.text)
        gold_labels.extend(labels_from_offsets(tokens, post.gold_offsets))
        meta.extend((post.id, tok.surface, tok.char_start) for tok in tokens)
    labels_a = _token_streams(dataset, preds_a, "A")
    labels_b = _token_streams(dataset, preds_b, "B")
    comparison = filtered_pairwise_comparison(
        gold_labels, labels_a, labels_b, meta=meta, max_examples=args.max_examples
    )
    sys.stdout.write(render_report(comparison))
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("\n".join(render_records(comparison)) + "\n")
        print(f"report -> {args.report}")
    if args.figures:
        from .plots import save_comparison_heatmaps

        figdir = Path(args.figures)
        figdir.mkdir(parents=True, exist_ok=True)
        print(f"figure -> {save_comparison_heatmaps(comparison, figdir / 'comparison_matrices.png')}")
    return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run config (version 1); flags override it")
    parser.add_argument("--train", help="training CSV")
    parser.add_argument("--validation", help="validation CSV")
    parser.add_argument("--word-list", dest="word_list", help="word list file (one term per line)")
    parser.add_argument("--embeddings", help="precomputed embedding sidecar")
    parser.add_argument("--mode", choices=[m.value for m in Augmentation],
                        help="feature augmentation mode")
    parser.add_argument("--head", choices=[h.value for h in HeadKind], help="classifier head")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--step-size", dest="step_size", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--encoder-kind", dest="encoder_kind", choices=["trainable", "precomputed"])
    parser.add_argument("--dim", type=int, help="encoder output dimension")
    parser.add_argument("--embed-dim", dest="embed_dim", type=int)
    parser.add_argument("--window", type=int)
    parser.add_argument("--table-size", dest="table_size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxspan",
        description="Toxic span detection: train token classifiers, extract character spans, "
                    "evaluate span F1, and compare models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="emit the synthetic lexicon corpus")
    p.add_argument("--outdir", required=True)
    p.add_argument("--posts", type=int, default=2000)
    p.add_argument("--vocab", type=int, default=500)
    p.add_argument("--lexicon-size", dest="lexicon_size", type=int, default=30)
    p.add_argument("--toxic-rate", dest="toxic_rate", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-features", help="fit tf-idf on a training CSV and export the record")
    p.add_argument("--train", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--word-list", dest="word_list")
    p.set_defaults(func=cmd_fit_features)

    p = sub.add_parser("train", help="train one model and write its bundle")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="bundle output path (.npz)")
    p.add_argument("--figures", help="directory for report figures")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train across seeds, keep the best bundle")
    _add_config_flags(p)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--out", required=True, help="best bundle output path (.npz)")
    p.add_argument("--table", help="per-seed JSONL table output")
    p.add_argument("--figures", help="directory for report figures")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="predict span offsets for an input CSV")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--embeddings", help="sidecar for precomputed-encoder bundles")
    p.add_argument("--config", help="optional run config; its fingerprint must match the bundle")
    _add_predict_override_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold spans")
    p.add_argument("--gold", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--per-post", dest="per_post", action="store_true")
    p.add_argument("--report", help="JSONL report output")
    p.add_argument("--figures", help="directory for report figures")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="pairwise error analysis of two prediction files")
    p.add_argument("--gold", required=True)
    p.add_argument("--a", required=True, help="predictions of model A")
    p.add_argument("--b", required=True, help="predictions of model B")
    p.add_argument("--max-examples", dest="max_examples", type=int, default=50)
    p.add_argument("--report", help="JSONL report output")
    p.add_argument("--figures", help="directory for report figures")
    p.set_defaults(func=cmd_compare)

    return parser


def _add_predict_override_flags(parser: argparse.ArgumentParser) -> None:
    # Fingerprint comparison reuses the training config flags, minus data paths.
    parser.add_argument("--mode", choices=[m.value for m in Augmentation])
    parser.add_argument("--head", choices=[h.value for h in HeadKind])
    parser.add_argument("--encoder-kind", dest="encoder_kind", choices=["trainable", "precomputed"])
    parser.add_argument("--dim", type=int)
    parser.add_argument("--embed-dim", dest="embed_dim", type=int)
    parser.add_argument("--window", type=int)
    parser.add_argument("--table-size", dest="table_size", type=int)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (CorpusError, FeatureError, EncoderError, ModelError, EvalError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
