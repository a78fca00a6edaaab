"""Toxic span detection toolkit: feature-augmented token classification with
softmax or linear-chain CRF heads, character-span extraction, and span-F1
evaluation."""

from .corpus import (
    LABEL_NAMES,
    NON_TOXIC,
    TOXIC,
    CorpusError,
    Dataset,
    Post,
    Token,
    TokenizedPost,
    parse_dataset,
    project_labels,
    tokenize,
)
from .encoder import EncoderError, EncoderSpec, load_precomputed
from .evaluation import (
    ConfusionMatrix,
    EvalError,
    ModelComparison,
    SpanF1Result,
    filtered_pairwise_comparison,
    macro_f1,
    render_report,
    span_f1,
    token_confusion,
)
from .features import (
    Augmentation,
    FeatureError,
    TfIdfModel,
    TokenFeatures,
    WordList,
    augment,
    fit_tfidf,
    load_word_list,
    tfidf_weight,
    word_list_flag,
)
from .model import (
    ClassifierHead,
    CompatibilityError,
    CrfParameters,
    HeadKind,
    ModelBundle,
    ModelError,
    TrainConfig,
    emissions,
    load_bundle,
    log_partition,
    predict,
    save_bundle,
    seed_sweep,
    sequence_score,
    train,
    viterbi,
)
from .spans import SpanSet, labels_to_spans, offsets_to_intervals

__version__ = "0.1.0"
