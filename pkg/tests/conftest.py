"""Shared fixtures: synthetic corpora and small trained models."""

import random

import numpy as np
import pytest

from feedbackclf import (
    LABELS,
    Example,
    build_model,
    build_vocab,
    default_config,
    default_train_config,
    labels_to_multihot,
    resolve_max_len,
    train,
)

# Each label owns a disjoint token set, so any architecture can separate
# the classes from lexical evidence alone.
LABEL_WORDS = {
    "comment": ["nice", "app", "like", "good", "cool"],
    "request": ["please", "add", "feature", "want", "option"],
    "bug": ["crash", "error", "broken", "fails", "freeze"],
    "complaint": ["slow", "bad", "annoying", "terrible", "hate"],
    "meaningless": ["asdf", "zzz", "blah", "qwerty", "xyz"],
    "undetermined": ["maybe", "unsure", "unclear", "dunno", "perhaps"],
}


def separable_examples(n: int, seed: int = 7, min_len: int = 4, max_len: int = 8):
    """n examples cycling through the six labels, lexically separable."""
    rng = random.Random(seed)
    examples = []
    for i in range(n):
        label = LABELS[i % 6]
        tokens = [rng.choice(LABEL_WORDS[label])
                  for _ in range(rng.randint(min_len, max_len))]
        examples.append(
            Example(f"e{i}", " ".join(tokens), tokens, labels_to_multihot([label]))
        )
    return examples


def encode_all(examples):
    vocab = build_vocab(e.tokens for e in examples)
    for e in examples:
        e.token_ids = [vocab.lookup(t) for t in e.tokens]
    return vocab


def write_tsv(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            names = ",".join(sorted(e.gold_set(), key=LABELS.index))
            fh.write(f"{e.id}\t{e.raw_text}\t{names}\n")


def fit_tiny(arch: str, examples, vocab, seed: int = 0, epochs: int = 10,
             batch_size: int = 4, dev=None, **config_overrides):
    config = default_config(arch, len(vocab), **config_overrides)
    resolve_max_len(config, examples)
    rng = np.random.default_rng(seed)
    model = build_model(config, rng, vocab=vocab, labels=LABELS)
    cfg = default_train_config(arch, epochs=epochs, batch_size=batch_size)
    model, history = train(model, examples, dev, cfg, rng)
    return model, history


@pytest.fixture(scope="session")
def separable_corpus():
    examples = separable_examples(48)
    vocab = encode_all(examples)
    return examples, vocab


@pytest.fixture(scope="session")
def tiny_fasttext(separable_corpus):
    examples, vocab = separable_corpus
    model, history = fit_tiny("fasttext", examples, vocab, epochs=15, batch_size=1)
    return model, history


@pytest.fixture
def corpus_file(tmp_path):
    examples = separable_examples(30, seed=3)
    path = tmp_path / "corpus.tsv"
    write_tsv(examples, path)
    return path, examples
