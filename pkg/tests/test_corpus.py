"""Tokenization, vocabulary, and corpus-file behavior."""

import random
import string

import pytest

from feedbackclf import (
    LABELS,
    CorpusFormatError,
    CorpusStats,
    Example,
    build_vocab,
    clean_english_text,
    corpus_stats,
    encode,
    labels_to_multihot,
    load_dataset,
    load_prediction_file,
    tokenize,
    write_dataset,
)
from feedbackclf.corpus import FILTER_CHARS, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN

from conftest import separable_examples, write_tsv


# ---------------------------------------------------------------------------
# tokenize / clean


def test_tokenize_basic():
    assert tokenize("Hello, world!") == ["hello", "world"]
    assert tokenize("a-b c.d") == ["a", "b", "c", "d"]
    assert tokenize("") == []
    assert tokenize("   \t\n ") == []


def test_tokenize_never_emits_filter_chars_or_uppercase():
    rng = random.Random(0)
    alphabet = string.ascii_letters + string.digits + FILTER_CHARS + "  'é漢"
    for _ in range(300):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
        for tok in tokenize(text):
            assert tok, "empty token"
            assert not any(c in FILTER_CHARS for c in tok)
            assert tok == tok.lower()


def test_tokenize_deterministic():
    rng = random.Random(1)
    for _ in range(100):
        text = "".join(rng.choice(string.printable) for _ in range(50))
        assert tokenize(text) == tokenize(text)


def test_clean_english_folds_quotes_and_controls():
    assert clean_english_text("it’s “fine”") == "it's \"fine\""
    assert clean_english_text("a\x00b\x07c") == "abc"
    assert clean_english_text("  a \t b\n\nc ") == "a b c"


def test_tokenize_clean_english_applied():
    assert tokenize("It’s broken", clean_english=True) == ["it's", "broken"]
    # without cleaning the curly apostrophe survives inside the token
    assert tokenize("It’s broken") == ["it’s", "broken"]


# ---------------------------------------------------------------------------
# vocabulary


def test_vocab_reserved_ids():
    vocab = build_vocab([["a", "b", "a"]])
    assert vocab.id_to_token[PAD_ID] == PAD_TOKEN
    assert vocab.id_to_token[UNK_ID] == UNK_TOKEN
    assert vocab.lookup("a") == 2  # most frequent real token
    assert vocab.lookup("b") == 3
    assert vocab.lookup("zzz") == UNK_ID


def test_vocab_frequency_order_ties_by_first_occurrence():
    vocab = build_vocab([["b", "a", "b", "a", "c"]])
    # b and a tie at 2; b occurred first
    assert vocab.lookup("b") == 2
    assert vocab.lookup("a") == 3
    assert vocab.lookup("c") == 4


def test_vocab_min_count_and_max_size():
    seqs = [["a"] * 5 + ["b"] * 3 + ["c"] * 2 + ["d"]]
    assert len(build_vocab(seqs, min_count=2)) == 2 + 3  # a, b, c survive
    assert len(build_vocab(seqs, max_size=2)) == 2 + 2  # a, b kept
    with pytest.raises(ValueError):
        build_vocab(seqs, min_count=0)


def test_vocab_round_trip_every_real_token():
    rng = random.Random(2)
    for _ in range(20):
        seqs = [[f"w{rng.randint(0, 30)}" for _ in range(rng.randint(1, 20))]
                for _ in range(rng.randint(1, 10))]
        vocab = build_vocab(seqs)
        for tok, idx in vocab.token_to_id.items():
            assert vocab.id_to_token[idx] == tok


def test_encode_length_equals_max_len():
    vocab = build_vocab([["a", "b", "c"]])
    rng = random.Random(3)
    for _ in range(100):
        toks = [rng.choice("abcxyz") for _ in range(rng.randint(0, 20))]
        for max_len in (1, 4, 9):
            ids = encode(toks, vocab, max_len)
            assert len(ids) == max_len
            assert all(i < len(vocab) for i in ids)


def test_encode_truncates_front_pads_back():
    vocab = build_vocab([["a", "b"]])
    assert encode(["a", "b", "a"], vocab, 2) == [2, 3]
    assert encode(["a"], vocab, 3) == [2, PAD_ID, PAD_ID]
    with pytest.raises(ValueError):
        encode(["a"], vocab, 0)


# ---------------------------------------------------------------------------
# dataset files


def test_load_dataset_round_trip(tmp_path):
    examples = separable_examples(24, seed=11)
    # add a multi-label example
    examples.append(Example("m1", "crash and slow", ["crash", "and", "slow"],
                            labels_to_multihot(["bug", "complaint"])))
    path = tmp_path / "c.tsv"
    write_tsv(examples, path)
    loaded, stats = load_dataset(path)
    assert [e.id for e in loaded] == [e.id for e in examples]
    assert [e.gold for e in loaded] == [e.gold for e in examples]
    assert [e.tokens for e in loaded] == [tokenize(e.raw_text) for e in examples]
    # serialize again and reload: identical
    path2 = tmp_path / "c2.tsv"
    write_dataset(loaded, path2)
    reloaded, _ = load_dataset(path2)
    assert reloaded == loaded


def test_load_dataset_fills_ids_with_vocab(tmp_path, corpus_file):
    path, _ = corpus_file
    examples, _ = load_dataset(path)
    assert all(e.token_ids is None for e in examples)
    vocab = build_vocab(e.tokens for e in examples)
    examples2, _ = load_dataset(path, vocab=vocab)
    for e in examples2:
        assert e.token_ids == [vocab.lookup(t) for t in e.tokens]
        assert all(i < len(vocab) for i in e.token_ids)


def test_load_dataset_errors(tmp_path):
    bad_cols = tmp_path / "bad1.tsv"
    bad_cols.write_text("id1\tonly two columns\n")
    with pytest.raises(CorpusFormatError, match="expected 3 tab-separated columns at line 1, got 2"):
        load_dataset(bad_cols)

    blank = tmp_path / "bad2.tsv"
    blank.write_text("a\tx\tcomment\n\nb\ty\tbug\n")
    with pytest.raises(CorpusFormatError, match="blank line at line 2"):
        load_dataset(blank)

    bad_label = tmp_path / "bad3.tsv"
    bad_label.write_text("a\tx\tcomment\nb\ty\tpraise\n")
    with pytest.raises(CorpusFormatError, match="unknown label 'praise' at line 2"):
        load_dataset(bad_label)

    empty_label = tmp_path / "bad4.tsv"
    empty_label.write_text("a\tx\t\n")
    with pytest.raises(CorpusFormatError):
        load_dataset(empty_label)


def test_every_example_has_a_gold_label(corpus_file):
    path, _ = corpus_file
    examples, _ = load_dataset(path)
    for e in examples:
        assert sum(e.gold) >= 1
        assert e.gold_set()
        assert e.gold_indices() == tuple(i for i, b in enumerate(e.gold) if b)


# ---------------------------------------------------------------------------
# statistics


def test_corpus_stats_counts():
    examples = [
        Example("a", "", [], labels_to_multihot(["comment"])),
        Example("b", "", [], labels_to_multihot(["comment", "bug"])),
        Example("c", "", [], labels_to_multihot(["complaint"])),
        Example("d", "", [], labels_to_multihot(["meaningless"])),
    ]
    stats = corpus_stats(examples)
    assert isinstance(stats, CorpusStats)
    assert stats.n_examples == 4
    assert stats.per_label["comment"] == 2
    assert stats.per_label["bug"] == 1
    assert sum(stats.per_label.values()) >= stats.n_examples
    assert stats.fraction_multilabel == 0.25
    assert stats.fraction_comment_plus_complaint == 0.75
    assert 0.0 <= stats.fraction_multilabel <= 1.0
    with pytest.raises(ValueError):
        corpus_stats([])


def test_labels_to_multihot():
    assert labels_to_multihot(["comment"]) == (1, 0, 0, 0, 0, 0)
    assert labels_to_multihot(["bug", "complaint"]) == (0, 0, 1, 1, 0, 0)
    assert len(LABELS) == 6


# ---------------------------------------------------------------------------
# prediction files


def test_load_prediction_file(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("a\tcomment\t0.9\nb\tbug\t0.5\nb\tcomplaint\t0.4\n")
    preds = load_prediction_file(path)
    assert preds == {"a": {"comment"}, "b": {"bug", "complaint"}}


def test_load_prediction_file_errors(tmp_path):
    bad = tmp_path / "p.tsv"
    bad.write_text("a\tcomment\tnotanumber\n")
    with pytest.raises(CorpusFormatError, match="not a number"):
        load_prediction_file(bad)
    bad.write_text("a\tpraise\t0.5\n")
    with pytest.raises(CorpusFormatError, match="unknown label 'praise'"):
        load_prediction_file(bad)
    bad.write_text("a\tcomment\n")
    with pytest.raises(CorpusFormatError, match="expected 3"):
        load_prediction_file(bad)
