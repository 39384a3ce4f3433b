"""Tokenization, vocabulary construction, and corpus loading.

Corpus files are UTF-8 TSV, one example per line::

    id<TAB>text<TAB>label[,label]*

Labels come from the fixed six-tag set in :data:`LABELS`; an example may
carry several comma-separated labels.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field

LABELS = ("comment", "request", "bug", "complaint", "meaningless", "undetermined")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}
N_LABELS = len(LABELS)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1

# Characters replaced by a space before whitespace splitting.
FILTER_CHARS = "!\"#$%&()*+,-./:;<=>?@[\\]^_`{|}~\t\n"
_FILTER_TABLE = str.maketrans({c: " " for c in FILTER_CHARS})

# Curly quote / apostrosphe forms folded to ASCII by the English cleaner.
_QUOTE_TABLE = str.maketrans(
    {
        "‘": "'",
        "’": "'",
        "‚": "'",
        "‛": "'",
        "“": '"',
        "”": '"',
        "„": '"',
        "‟": '"',
    }
)


class CorpusFormatError(ValueError):
    """Malformed corpus or prediction file (bad column count, unknown label, ...)."""


def clean_english_text(text: str) -> str:
    """Elementary cleaning applied to English text before tokenization.

    Folds curly quotes to ASCII, drops non-whitespace control characters,
    and collapses whitespace runs to single spaces.
    """
    text = text.translate(_QUOTE_TABLE)
    text = "".join(
        c for c in text if c in "\t\n\r" or unicodedata.category(c) != "Cc"
    )
    return " ".join(text.split())


def tokenize(text: str, clean_english: bool = False) -> list[str]:
    """Lowercase, replace filter characters with spaces, split on whitespace.

    Empty tokens are dropped; an empty string yields an empty list.
    """
    if clean_english:
        text = clean_english_text(text)
    return text.lower().translate(_FILTER_TABLE).split()


@dataclass
class Vocabulary:
    """Token/id map with ids 0 and 1 reserved for PAD and UNK."""

    token_to_id: dict[str, int]
    id_to_token: list[str]
    min_count: int = 1
    max_size: int | None = None
    pad_id: int = PAD_ID
    unk_id: int = UNK_ID

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)


def build_vocab(
    token_sequences,
    min_count: int = 1,
    max_size: int | None = None,
) -> Vocabulary:
    """Build a vocabulary from an iterable of token sequences.

    Tokens are ranked by descending frequency, ties broken by first
    occurrence, and receive ids from 2 upward. Tokens seen fewer than
    ``min_count`` times are dropped; at most ``max_size`` real tokens are
    kept.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    pos = 0
    for seq in token_sequences:
        for tok in seq:
            counts[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = pos
            pos += 1
    ranked = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], first_seen[t]),
    )
    if max_size is not None:
        ranked = ranked[:max_size]
    id_to_token = [PAD_TOKEN, UNK_TOKEN] + ranked
    token_to_id = {t: i + 2 for i, t in enumerate(ranked)}
    return Vocabulary(token_to_id, id_to_token, min_count=min_count, max_size=max_size)


def encode(tokens, vocab: Vocabulary, max_len: int) -> list[int]:
    """Map tokens to ids, truncate to the first ``max_len``, pad at the end."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.lookup(t) for t in tokens[:max_len]]
    ids.extend([vocab.pad_id] * (max_len - len(ids)))
    return ids


@dataclass
class Example:
    """One feedback sentence with its gold multi-hot label vector."""

    id: str
    raw_text: str
    tokens: list[str]
    gold: tuple[int, ...]
    token_ids: list[int] | None = None

    def gold_set(self) -> frozenset[str]:
        return frozenset(LABELS[i] for i, bit in enumerate(self.gold) if bit)

    def gold_indices(self) -> tuple[int, ...]:
        return tuple(i for i, bit in enumerate(self.gold) if bit)


@dataclass
class CorpusStats:
    n_examples: int
    per_label: dict[str, int]
    fraction_multilabel: float
    fraction_comment_plus_complaint: float


def labels_to_multihot(labels, label_set=LABELS) -> tuple[int, ...]:
    gold = [0] * len(label_set)
    for name in labels:
        gold[label_set.index(name)] = 1
    return tuple(gold)


def _parse_label_field(text: str, lineno: int, label_set) -> tuple[int, ...]:
    gold = [0] * len(label_set)
    for name in text.split(","):
        if name not in label_set:
            raise CorpusFormatError(f"unknown label '{name}' at line {lineno}")
        gold[label_set.index(name)] = 1
    return tuple(gold)


def load_dataset(
    path,
    label_set=LABELS,
    vocab: Vocabulary | None = None,
    clean_english: bool = False,
) -> tuple[list[Example], CorpusStats]:
    """Load a TSV corpus into examples plus distribution statistics.

    With ``vocab`` absent, examples carry raw tokens only (token_ids is
    None) so a vocabulary can be built from them afterwards; with a
    vocabulary, token_ids are filled in (unknown tokens map to UNK).

    Raises:
        CorpusFormatError: on a blank line, a line without exactly three
            tab-separated columns, or an unknown label string.
    """
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                raise CorpusFormatError(f"blank line at line {lineno}")
            cols = line.split("\t")
            if len(cols) != 3:
                raise CorpusFormatError(
                    f"expected 3 tab-separated columns at line {lineno}, got {len(cols)}"
                )
            ex_id, text, label_field = cols
            gold = _parse_label_field(label_field, lineno, label_set)
            tokens = tokenize(text, clean_english=clean_english)
            token_ids = [vocab.lookup(t) for t in tokens] if vocab is not None else None
            examples.append(Example(ex_id, text, tokens, gold, token_ids))
    return examples, corpus_stats(examples)


def write_dataset(examples, path) -> None:
    """Serialize examples back to the TSV corpus format."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            names = ",".join(sorted(e.gold_set(), key=LABELS.index))
            fh.write(f"{e.id}\t{e.raw_text}\t{names}\n")


def load_prediction_file(path, label_set=LABELS) -> dict[str, set[str]]:
    """Read a prediction TSV (``id<TAB>label<TAB>score``) into id -> label set.

    Several lines may share an id to express a multi-label prediction; the
    score column must parse as a float but is otherwise ignored.
    """
    preds: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                raise CorpusFormatError(f"blank line at line {lineno}")
            cols = line.split("\t")
            if len(cols) != 3:
                raise CorpusFormatError(
                    f"expected 3 tab-separated columns at line {lineno}, got {len(cols)}"
                )
            ex_id, name, score = cols
            if name not in label_set:
                raise CorpusFormatError(f"unknown label '{name}' at line {lineno}")
            try:
                float(score)
            except ValueError:
                raise CorpusFormatError(
                    f"score '{score}' at line {lineno} is not a number"
                ) from None
            preds.setdefault(ex_id, set()).add(name)
    return preds


def encode_examples(examples, vocab: Vocabulary) -> list[Example]:
    """Return copies of ``examples`` with token_ids filled from ``vocab``."""
    return [
        Example(e.id, e.raw_text, e.tokens, e.gold, [vocab.lookup(t) for t in e.tokens])
        for e in examples
    ]


def corpus_stats(examples) -> CorpusStats:
    if not examples:
        raise ValueError("cannot compute statistics of an empty example list")
    per_label = {name: 0 for name in LABELS}
    multi = 0
    cc = 0
    for e in examples:
        bits = sum(e.gold)
        if bits > 1:
            multi += 1
        if e.gold[LABEL_INDEX["comment"]] or e.gold[LABEL_INDEX["complaint"]]:
            cc += 1
        for i, bit in enumerate(e.gold):
            if bit:
                per_label[LABELS[i]] += 1
    n = len(examples)
    return CorpusStats(n, per_label, multi / n, cc / n)
