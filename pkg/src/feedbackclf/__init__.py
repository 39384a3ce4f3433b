"""Neural classifiers for customer-feedback sentences, from scratch on numpy.

Five architectures (an averaged-embedding linear model, a multi-width
convolutional model, and three bidirectional-LSTM variants) score short
feedback sentences into six tags: comment, request, bug, complaint,
meaningless, undetermined. Forward and backward passes are hand-written
and verified by finite differences; training, evaluation, and model
serialization are exposed both as a library and a command-line tool.
"""

from .corpus import (
    LABELS,
    LABEL_INDEX,
    N_LABELS,
    PAD_ID,
    PAD_TOKEN,
    UNK_ID,
    UNK_TOKEN,
    CorpusFormatError,
    CorpusStats,
    Example,
    Vocabulary,
    build_vocab,
    clean_english_text,
    corpus_stats,
    encode,
    encode_examples,
    labels_to_multihot,
    load_dataset,
    load_prediction_file,
    tokenize,
    write_dataset,
)
from .estimator import FeedbackClassifier
from .gradcheck import (
    GradCheckReport,
    architecture_checks,
    grad_check,
    layer_checks,
    run_all,
)
from .metrics import (
    EvalReport,
    PRF,
    evaluate,
    evaluate_sets,
    exact_accuracy,
    micro_f1,
    per_tag_f1,
    report_to_json,
)
from .models import (
    ARCHITECTURES,
    ConfigError,
    Model,
    ModelConfig,
    Prediction,
    build_model,
    config_from_dict,
    config_to_dict,
    default_config,
    resolve_max_len,
)
from .serialize import ModelFileError, ModelVersionError, load_model, save_model
from .trainer import (
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    binary_cross_entropy,
    default_train_config,
    sgd_step,
    softmax_nll,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "AdamState",
    "ConfigError",
    "CorpusFormatError",
    "CorpusStats",
    "EvalReport",
    "Example",
    "FeedbackClassifier",
    "GradCheckReport",
    "LABELS",
    "LABEL_INDEX",
    "Model",
    "ModelConfig",
    "ModelFileError",
    "ModelVersionError",
    "N_LABELS",
    "PAD_ID",
    "PAD_TOKEN",
    "PRF",
    "Prediction",
    "TrainConfig",
    "TrainHistory",
    "UNK_ID",
    "UNK_TOKEN",
    "Vocabulary",
    "adam_step",
    "architecture_checks",
    "binary_cross_entropy",
    "build_model",
    "build_vocab",
    "clean_english_text",
    "config_from_dict",
    "config_to_dict",
    "corpus_stats",
    "default_config",
    "default_train_config",
    "encode",
    "encode_examples",
    "evaluate",
    "evaluate_sets",
    "exact_accuracy",
    "grad_check",
    "labels_to_multihot",
    "layer_checks",
    "load_dataset",
    "load_model",
    "load_prediction_file",
    "micro_f1",
    "per_tag_f1",
    "report_to_json",
    "resolve_max_len",
    "run_all",
    "save_model",
    "sgd_step",
    "softmax_nll",
    "tokenize",
    "train",
    "write_dataset",
]
