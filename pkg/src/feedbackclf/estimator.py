"""scikit-learn style estimator wrapping tokenization, vocabulary
construction, model building, and training behind fit/predict.

    clf = FeedbackClassifier(arch="cnn", epochs=5, seed=7)
    clf.fit(texts, labels)
    clf.predict(["the app crashes on startup"])   # -> array(["bug"])

Labels are given per example as either a comma-separated string
("bug,complaint") or an iterable of label names. Hyperparameters left at
None fall back to the architecture's defaults.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .corpus import LABELS, Example, build_vocab, tokenize
from .metrics import exact_accuracy
from .models import build_model, default_config, resolve_max_len
from .trainer import default_train_config, train


def _check_texts(X) -> list[str]:
    if isinstance(X, str):
        raise ValueError("X must be a sequence of strings, not a single string")
    texts = list(X)
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise ValueError(f"X[{i}] is {type(t).__name__}, expected str")
    return texts


def _parse_labels(item, position: int) -> tuple[int, ...]:
    names = [n.strip() for n in item.split(",")] if isinstance(item, str) else list(item)
    if not names:
        raise ValueError(f"y[{position}] has no labels")
    gold = [0] * len(LABELS)
    for name in names:
        if name not in LABELS:
            raise ValueError(
                f"y[{position}] has unknown label '{name}'; valid labels: "
                + ", ".join(LABELS)
            )
        gold[LABELS.index(name)] = 1
    return tuple(gold)


def _to_examples(texts, y, clean_english: bool) -> list[Example]:
    if y is None or len(list(y)) != len(texts):
        raise ValueError(
            f"X and y have different lengths: {len(texts)} vs "
            f"{len(list(y)) if y is not None else 'None'}"
        )
    return [
        Example(str(i), text, tokenize(text, clean_english), _parse_labels(item, i))
        for i, (text, item) in enumerate(zip(texts, y))
    ]


class FeedbackClassifier(BaseEstimator, ClassifierMixin):
    """Neural feedback-sentence classifier with a scikit-learn interface.

    Parameters left at None use the defaults of the chosen architecture.
    ``seed`` fixes initialization, shuffling, and dropout, so two fits
    with equal data and parameters produce identical models.
    """

    def __init__(self, arch: str = "fasttext", embed_dim=None, lstm_units=None,
                 conv_filters=None, conv_widths=None, pool_size=None, keep_prob=None,
                 max_len=None, epochs=None, batch_size=None, learning_rate=None,
                 early_stopping_patience=None, min_count=1, max_vocab=None,
                 clean_english=False, seed=0):
        self.arch = arch
        self.embed_dim = embed_dim
        self.lstm_units = lstm_units
        self.conv_filters = conv_filters
        self.conv_widths = conv_widths
        self.pool_size = pool_size
        self.keep_prob = keep_prob
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.early_stopping_patience = early_stopping_patience
        self.min_count = min_count
        self.max_vocab = max_vocab
        self.clean_english = clean_english
        self.seed = seed

    # -- fitting -------------------------------------------------------------

    def fit(self, X, y, dev=None):
        """Fit on texts ``X`` and labels ``y``.

        ``dev`` may be a (texts, labels) tuple evaluated once per epoch,
        which also enables early stopping for architectures that use it.
        """
        texts = _check_texts(X)
        examples = _to_examples(texts, y, self.clean_english)
        if not examples:
            raise ValueError("cannot fit on an empty dataset")
        self.vocab_ = build_vocab(
            (e.tokens for e in examples),
            min_count=self.min_count,
            max_size=self.max_vocab,
        )
        for e in examples:
            e.token_ids = [self.vocab_.lookup(t) for t in e.tokens]

        dev_examples = None
        if dev is not None:
            dev_texts, dev_y = dev
            dev_examples = _to_examples(_check_texts(dev_texts), dev_y,
                                        self.clean_english)
            for e in dev_examples:
                e.token_ids = [self.vocab_.lookup(t) for t in e.tokens]

        config = default_config(
            self.arch, len(self.vocab_),
            embed_dim=self.embed_dim, lstm_units=self.lstm_units,
            conv_filters=self.conv_filters,
            conv_widths=tuple(self.conv_widths) if self.conv_widths else None,
            pool_size=self.pool_size, keep_prob=self.keep_prob, max_len=self.max_len,
        )
        resolve_max_len(config, examples)
        rng = np.random.default_rng(self.seed)
        model = build_model(config, rng, vocab=self.vocab_, labels=LABELS)
        train_cfg = default_train_config(
            self.arch, learning_rate=self.learning_rate, epochs=self.epochs,
            batch_size=self.batch_size,
            early_stopping_patience=self.early_stopping_patience, seed=self.seed,
        )
        self.model_, self.history_ = train(model, examples, dev_examples,
                                           train_cfg, rng)
        self.classes_ = np.asarray(LABELS)
        return self

    # -- inference -----------------------------------------------------------

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this FeedbackClassifier instance is not fitted yet; call fit first"
            )

    def _encode(self, X) -> list[list[int]]:
        texts = _check_texts(X)
        return [
            [self.vocab_.lookup(t) for t in tokenize(text, self.clean_english)]
            for text in texts
        ]

    def predict(self, X) -> np.ndarray:
        """Predicted label name per text (the top-scoring single label)."""
        self._require_fitted()
        return np.asarray(
            [LABELS[self.model_.predict(ids).label_index] for ids in self._encode(X)]
        )

    def predict_scores(self, X) -> np.ndarray:
        """(n_texts, n_labels) array of per-label scores."""
        self._require_fitted()
        return np.stack([self.model_.score(ids) for ids in self._encode(X)])

    def score(self, X, y) -> float:
        """Exact accuracy: the predicted singleton must equal the gold set."""
        self._require_fitted()
        pred_sets = [{LABELS.index(name)} for name in self.predict(X)]
        gold_sets = [
            {i for i, bit in enumerate(_parse_labels(item, pos)) if bit}
            for pos, item in enumerate(y)
        ]
        return exact_accuracy(pred_sets, gold_sets)
