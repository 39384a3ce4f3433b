"""Architecture assembly: parameter counts, scoring behavior, configuration."""

import numpy as np
import pytest

from feedbackclf import (
    ARCHITECTURES,
    ConfigError,
    Example,
    LABELS,
    ModelConfig,
    build_model,
    build_vocab,
    config_from_dict,
    config_to_dict,
    default_config,
    labels_to_multihot,
    resolve_max_len,
)
from feedbackclf.corpus import UNK_ID


def tiny_config(arch, vocab_size=12, max_len=6):
    """Small but structurally faithful configuration for fast tests."""
    overrides = dict(embed_dim=8, lstm_units=4, conv_filters=6, max_len=max_len)
    if arch == "cnn":
        overrides["conv_widths"] = (2, 3)
    elif arch in ("bilstm2", "bilstm3"):
        overrides["conv_widths"] = (3,)
        overrides["pool_size"] = 2
    if arch == "fasttext":
        overrides["max_len"] = None
    return default_config(arch, vocab_size, **overrides)


def tiny_model(arch, seed=0, **kwargs):
    return build_model(tiny_config(arch, **kwargs), np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# parameter counts


# Closed forms evaluated by hand at vocab_size 10 with the default widths:
#   fasttext: 10*200                     + (200*6 + 6)              =   3206
#   cnn:      10*100 + sum_w(128*w*100 + 128) + (384*6 + 6)         = 157294
#   bilstm1:  10*64  + 2*4*(64*64 + 64*64 + 64) + 64 extras…        =  67462
#   bilstm2:  adds a width-5 conv over 64 dims feeding the BiLSTM   =  88006
#   bilstm3:  bilstm2 + gamma/beta over 64 conv channels (2*64)     =  88134
EXPECTED_PARAM_COUNTS = {
    "fasttext": 3206,
    "cnn": 157294,
    "bilstm1": 67462,
    "bilstm2": 88006,
    "bilstm3": 88134,
}


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_default_parameter_counts(arch):
    model = build_model(default_config(arch, 10, max_len=None))
    assert model.param_count() == EXPECTED_PARAM_COUNTS[arch]
    assert model.params.n_params() == model.param_count()


def test_parameter_count_tracks_vocab_size():
    # growing the vocabulary by one row adds exactly embed_dim parameters
    for arch in ARCHITECTURES:
        small = build_model(default_config(arch, 10, max_len=None)).param_count()
        large = build_model(default_config(arch, 11, max_len=None)).param_count()
        embed_dim = default_config(arch, 10).embed_dim
        assert large - small == embed_dim


# ---------------------------------------------------------------------------
# score behavior


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_zeroed_output_layer_gives_uniform_scores(arch):
    model = tiny_model(arch)
    model.params.value("out_w")[...] = 0.0
    model.params.value("out_b")[...] = 0.0
    scores = model.score([2, 3, 4, 5, 6, 7])
    if arch == "fasttext":
        np.testing.assert_allclose(scores, np.full(6, 1.0 / 6.0), atol=1e-7)
    else:
        np.testing.assert_array_equal(scores, np.full(6, 0.5, dtype=np.float32))
    # exact tie resolves to the lowest label index
    pred = model.predict([2, 3, 4])
    assert pred.label_index == 0
    assert model.labels[pred.label_index] == "comment"


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_score_shape_range_and_determinism(arch):
    model = tiny_model(arch, seed=3)
    rng = np.random.default_rng(4)
    for _ in range(5):
        ids = list(rng.integers(0, 12, size=rng.integers(1, 9)))
        s1 = model.score(ids)
        s2 = model.score(ids)
        assert s1.shape == (6,)
        assert np.array_equal(s1, s2)  # inference consumes no randomness
        assert np.all(np.isfinite(s1))
        if arch == "fasttext":
            assert np.all(s1 >= 0) and abs(s1.sum() - 1.0) < 1e-6
        else:
            assert np.all((s1 > 0) & (s1 < 1))
        pred = model.predict(ids)
        assert pred.label_index == int(np.argmax(pred.scores))
        assert np.array_equal(pred.scores, s1)


def test_fasttext_order_invariance():
    model = tiny_model("fasttext", seed=5)
    rng = np.random.default_rng(6)
    for _ in range(20):
        ids = list(rng.integers(2, 12, size=rng.integers(2, 10)))
        shuffled = list(ids)
        rng.shuffle(shuffled)
        np.testing.assert_allclose(model.score(ids), model.score(shuffled), atol=1e-6)


def test_fasttext_empty_input_falls_back_to_unk():
    model = tiny_model("fasttext", seed=7)
    np.testing.assert_array_equal(model.score([]), model.score([UNK_ID]))


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_batch_forward_matches_single(arch):
    model = tiny_model(arch, seed=8)
    rng = np.random.default_rng(9)
    ids_list = [list(rng.integers(0, 12, size=6)) for _ in range(4)]
    scores, _ = model.forward_batch(ids_list, training=False)
    for row, ids in zip(scores, ids_list):
        np.testing.assert_array_equal(row, model.score(ids))


def test_non_finite_parameters_are_caught():
    model = tiny_model("fasttext")
    model.params.value("out_w")[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        model.score([2, 3])


def test_astype_round_trip():
    model = tiny_model("cnn", seed=10)
    wide = model.astype(np.float64)
    assert all(v.dtype == np.float64 for _, v, _ in wide.params.items())
    ids = [2, 3, 4, 5, 6, 7]
    np.testing.assert_allclose(wide.score(ids), model.score(ids), atol=1e-5)


# ---------------------------------------------------------------------------
# configuration


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="unknown architecture"):
        default_config("transformer", 10)
    with pytest.raises(ConfigError, match="unknown architecture"):
        ModelConfig(arch="mlp", vocab_size=10, embed_dim=8).validate()
    with pytest.raises(ConfigError, match="keep_prob"):
        default_config("cnn", 10, keep_prob=0.0)
    with pytest.raises(ConfigError, match="keep_prob"):
        default_config("cnn", 10, keep_prob=1.5)
    with pytest.raises(ConfigError, match="single convolution width"):
        default_config("bilstm2", 10, conv_widths=(3, 4))
    with pytest.raises(ConfigError, match="too small"):
        default_config("cnn", 10, max_len=4)  # widest default filter is 5
    with pytest.raises(ConfigError, match="vocab_size must be >= 1"):
        default_config("fasttext", 0)
    with pytest.raises(ConfigError, match="conv_widths"):
        default_config("cnn", 10, conv_widths=())


def test_min_len_per_architecture():
    assert tiny_config("fasttext").min_len() == 1
    assert default_config("cnn", 10).min_len() == 5  # widest filter
    assert default_config("bilstm1", 10).min_len() == 1
    assert default_config("bilstm2", 10).min_len() == 5 + 4 - 1  # width + pool - 1
    assert default_config("bilstm3", 10).min_len() == 8


def examples_of_lengths(lengths):
    return [
        Example(f"e{i}", "", [], labels_to_multihot(["comment"]),
                token_ids=[2] * n)
        for i, n in enumerate(lengths)
    ]


def test_resolve_max_len():
    cfg = default_config("cnn", 10)
    resolve_max_len(cfg, examples_of_lengths([3, 7, 6]))
    assert cfg.max_len == 7  # longest sentence wins

    cfg = default_config("cnn", 10)
    resolve_max_len(cfg, examples_of_lengths([2, 3]))
    assert cfg.max_len == 5  # raised to the widest filter

    cfg = default_config("bilstm2", 10)
    resolve_max_len(cfg, examples_of_lengths([4]))
    assert cfg.max_len == 8  # conv width 5 + pool 4 - 1

    cfg = default_config("cnn", 10)
    resolve_max_len(cfg, examples_of_lengths([300, 12]))
    assert cfg.max_len == 256  # capped

    cfg = default_config("cnn", 10, max_len=33)
    resolve_max_len(cfg, examples_of_lengths([300]))
    assert cfg.max_len == 33  # explicit setting wins

    cfg = default_config("fasttext", 10)
    resolve_max_len(cfg, examples_of_lengths([300]))
    assert cfg.max_len is None  # variable-length architecture


def test_build_model_checks_vocab_size():
    vocab = build_vocab([["a", "b", "c"]])  # 5 entries with pad/unk
    cfg = tiny_config("fasttext", vocab_size=10)
    with pytest.raises(ConfigError, match="does not match"):
        build_model(cfg, vocab=vocab)
    cfg = tiny_config("fasttext", vocab_size=5)
    model = build_model(cfg, vocab=vocab)
    assert model.vocab is vocab


def test_same_seed_same_model():
    for arch in ARCHITECTURES:
        a = tiny_model(arch, seed=42)
        b = tiny_model(arch, seed=42)
        for (name, va, _), (_, vb, _) in zip(a.params.items(), b.params.items()):
            assert np.array_equal(va, vb), name
        c = tiny_model(arch, seed=43)
        assert any(
            not np.array_equal(v, c.params.value(n)) for n, v, _ in a.params.items()
        )


def test_config_dict_round_trip():
    for arch in ARCHITECTURES:
        cfg = tiny_config(arch)
        again = config_from_dict(config_to_dict(cfg))
        assert again == cfg
        assert isinstance(again.conv_widths, tuple)
