"""Architecture assembly: wire layer primitives into the five classifiers.

All five models score one sentence into six per-label values:

    fasttext  embed -> average -> dense softmax
    cnn       embed -> {conv1d(w) -> global max pool} for each width
                    -> concat -> dropout -> dense sigmoid
    bilstm1   embed -> bilstm -> dropout -> dense sigmoid
    bilstm2   embed -> conv1d+relu -> maxpool -> bilstm -> dropout -> dense sigmoid
    bilstm3   bilstm2 with batch normalization between the convolution and pool

Forward passes run one example at a time; batched training stacks the
per-example results, except for bilstm3 where batch normalization couples
the examples of a minibatch and the batch path stages the computation
around a joint normalization over every convolution output row.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn
from .corpus import LABELS, N_LABELS, UNK_ID, Vocabulary

ARCHITECTURES = ("fasttext", "cnn", "bilstm1", "bilstm2", "bilstm3")

BN_MOMENTUM = 0.99
BN_EPS = 1e-3


class ConfigError(ValueError):
    """Inconsistent or invalid model/training configuration."""


@dataclass
class ModelConfig:
    arch: str
    vocab_size: int
    embed_dim: int
    n_labels: int = N_LABELS
    lstm_units: int = 64
    conv_filters: int = 128
    conv_widths: tuple[int, ...] = (3, 4, 5)
    pool_size: int = 4
    keep_prob: float = 1.0
    max_len: int | None = None

    def validate(self) -> None:
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture '{self.arch}'")
        for name in ("vocab_size", "embed_dim", "n_labels", "lstm_units",
                     "conv_filters", "pool_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.conv_widths or any(w < 1 for w in self.conv_widths):
            raise ConfigError("conv_widths must be positive")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if self.arch in ("bilstm2", "bilstm3") and len(self.conv_widths) != 1:
            raise ConfigError(f"{self.arch} uses a single convolution width")
        if self.max_len is not None and self.max_len < self.min_len():
            raise ConfigError(
                f"max_len {self.max_len} is too small for arch '{self.arch}' "
                f"(needs at least {self.min_len()}); increase max_len"
            )

    def min_len(self) -> int:
        """Smallest max_len the wiring supports."""
        if self.arch == "cnn":
            return max(self.conv_widths)
        if self.arch in ("bilstm2", "bilstm3"):
            return self.conv_widths[0] + self.pool_size - 1
        return 1


_ARCH_DEFAULTS = {
    "fasttext": dict(embed_dim=200, keep_prob=1.0),
    "cnn": dict(embed_dim=100, conv_filters=128, conv_widths=(3, 4, 5), keep_prob=0.5),
    "bilstm1": dict(embed_dim=64, lstm_units=64, keep_prob=0.3),
    "bilstm2": dict(embed_dim=64, lstm_units=64, conv_filters=64, conv_widths=(5,),
                    pool_size=4, keep_prob=0.3),
    "bilstm3": dict(embed_dim=64, lstm_units=64, conv_filters=64, conv_widths=(5,),
                    pool_size=4, keep_prob=0.3),
}


def default_config(arch: str, vocab_size: int, **overrides) -> ModelConfig:
    """Per-architecture default hyperparameters, with keyword overrides."""
    if arch not in _ARCH_DEFAULTS:
        raise ConfigError(f"unknown architecture '{arch}'")
    kwargs = dict(_ARCH_DEFAULTS[arch])
    for key, value in overrides.items():
        if value is None:
            continue
        kwargs[key] = value
    cfg = ModelConfig(arch=arch, vocab_size=vocab_size, **kwargs)
    cfg.validate()
    return cfg


def resolve_max_len(config: ModelConfig, train_examples) -> ModelConfig:
    """Fill in max_len from the training data when unset.

    Uses min(longest training sentence, 256), raised to the wiring's
    minimum usable length. fasttext ignores max_len entirely.
    """
    if config.arch == "fasttext" or config.max_len is not None:
        return config
    longest = max((len(e.token_ids or e.tokens) for e in train_examples), default=1)
    config.max_len = max(min(longest, 256), config.min_len())
    config.validate()
    return config


@dataclass
class Prediction:
    scores: np.ndarray
    label_index: int


class Model:
    """A configured architecture with its parameters, vocabulary, and labels."""

    def __init__(self, config: ModelConfig, params: nn.ParamStore,
                 buffers: dict[str, np.ndarray], vocab: Vocabulary | None = None,
                 labels=LABELS):
        self.config = config
        self.params = params
        self.buffers = buffers
        self.vocab = vocab
        self.labels = tuple(labels)

    # -- parameter views ---------------------------------------------------

    def _lstm_view(self, direction: str, grads: bool = False) -> dict[str, np.ndarray]:
        get = self.params.grad if grads else self.params.value
        view = {}
        for gate in nn.LSTM_GATES:
            view["w" + gate] = get(f"lstm_{direction}_w{gate}")
            view["u" + gate] = get(f"lstm_{direction}_u{gate}")
            view["b" + gate] = get(f"lstm_{direction}_b{gate}")
        return view

    # -- scoring -----------------------------------------------------------

    def _padded(self, token_ids) -> np.ndarray:
        ml = self.config.max_len
        if ml is None:
            raise ConfigError("max_len is not set; resolve it before scoring")
        ids = list(token_ids[:ml])
        ids.extend([0] * (ml - len(ids)))
        return np.asarray(ids, dtype=np.int64)

    def score(self, token_ids, training: bool = False, rng=None) -> np.ndarray:
        """Six per-label scores: a softmax distribution for fasttext,
        independent sigmoids otherwise."""
        scores, _ = self.forward_one(token_ids, training=training, rng=rng)
        return scores

    def predict(self, token_ids) -> Prediction:
        scores = self.score(token_ids, training=False)
        return Prediction(scores, int(np.argmax(scores)))

    # -- forward / backward, one example ------------------------------------

    def forward_one(self, token_ids, training: bool, rng=None):
        fwd = getattr(self, "_forward_" + self.config.arch)
        scores, cache = fwd(token_ids, training, rng)
        nn.assert_finite(scores, f"{self.config.arch} scores")
        return scores, cache

    def backward_one(self, cache, dz) -> None:
        getattr(self, "_backward_" + self.config.arch)(cache, dz)

    def _forward_fasttext(self, token_ids, training, rng):
        ids = list(token_ids) if len(token_ids) else [UNK_ID]
        emb_out, emb_cache = nn.embedding_forward(ids, self.params.value("embed"))
        avg, t = nn.average_forward(emb_out)
        scores, dense_cache = nn.dense_forward(
            avg, self.params.value("out_w"), self.params.value("out_b"), "softmax"
        )
        return scores, (emb_cache, t, dense_cache)

    def _backward_fasttext(self, cache, dz):
        emb_cache, t, dense_cache = cache
        davg = nn.dense_backward(
            dense_cache, dz, self.params.grad("out_w"), self.params.grad("out_b")
        )
        dx = nn.average_backward(t, davg)
        nn.embedding_backward(emb_cache, dx, self.params.grad("embed"))

    def _forward_cnn(self, token_ids, training, rng):
        ids = self._padded(token_ids)
        emb_out, emb_cache = nn.embedding_forward(ids, self.params.value("embed"))
        feats = []
        branch_caches = []
        for w in self.config.conv_widths:
            conv_out, conv_cache = nn.conv1d_forward(
                emb_out,
                self.params.value(f"conv{w}_w"),
                self.params.value(f"conv{w}_b"),
                relu=True,
            )
            pooled, pool_cache = nn.global_maxpool_forward(conv_out)
            feats.append(pooled)
            branch_caches.append((conv_cache, pool_cache))
        feat = np.concatenate(feats)
        dropped, mask = nn.dropout_forward(feat, self.config.keep_prob, training, rng)
        scores, dense_cache = nn.dense_forward(
            dropped, self.params.value("out_w"), self.params.value("out_b"), "sigmoid"
        )
        return scores, (emb_cache, emb_out.shape, branch_caches, mask, dense_cache)

    def _backward_cnn(self, cache, dz):
        emb_cache, emb_shape, branch_caches, mask, dense_cache = cache
        dfeat = nn.dense_backward(
            dense_cache, dz, self.params.grad("out_w"), self.params.grad("out_b")
        )
        dfeat = nn.dropout_backward(mask, dfeat)
        k = self.config.conv_filters
        demb = np.zeros(emb_shape, dtype=dfeat.dtype)
        for j, w in enumerate(self.config.conv_widths):
            conv_cache, pool_cache = branch_caches[j]
            dpool = nn.global_maxpool_backward(pool_cache, dfeat[j * k : (j + 1) * k])
            demb += nn.conv1d_backward(
                conv_cache, dpool,
                self.params.grad(f"conv{w}_w"), self.params.grad(f"conv{w}_b"),
            )
        nn.embedding_backward(emb_cache, demb, self.params.grad("embed"))

    def _forward_bilstm1(self, token_ids, training, rng):
        ids = self._padded(token_ids)
        emb_out, emb_cache = nn.embedding_forward(ids, self.params.value("embed"))
        hidden, lstm_cache = nn.bilstm_forward(
            emb_out, self._lstm_view("fwd"), self._lstm_view("bwd")
        )
        dropped, mask = nn.dropout_forward(hidden, self.config.keep_prob, training, rng)
        scores, dense_cache = nn.dense_forward(
            dropped, self.params.value("out_w"), self.params.value("out_b"), "sigmoid"
        )
        return scores, (emb_cache, lstm_cache, mask, dense_cache)

    def _backward_bilstm1(self, cache, dz):
        emb_cache, lstm_cache, mask, dense_cache = cache
        dhidden = nn.dense_backward(
            dense_cache, dz, self.params.grad("out_w"), self.params.grad("out_b")
        )
        dhidden = nn.dropout_backward(mask, dhidden)
        demb = nn.bilstm_backward(
            lstm_cache, self._lstm_view("fwd"), self._lstm_view("bwd"), dhidden,
            self._lstm_view("fwd", grads=True), self._lstm_view("bwd", grads=True),
        )
        nn.embedding_backward(emb_cache, demb, self.params.grad("embed"))

    def _conv_stage(self, token_ids):
        ids = self._padded(token_ids)
        emb_out, emb_cache = nn.embedding_forward(ids, self.params.value("embed"))
        conv_out, conv_cache = nn.conv1d_forward(
            emb_out, self.params.value("conv_w"), self.params.value("conv_b"), relu=True
        )
        return emb_cache, emb_out.shape, conv_cache, conv_out

    def _recurrent_stage(self, seq, training, rng):
        pooled, pool_cache = nn.maxpool1d_forward(seq, self.config.pool_size)
        hidden, lstm_cache = nn.bilstm_forward(
            pooled, self._lstm_view("fwd"), self._lstm_view("bwd")
        )
        dropped, mask = nn.dropout_forward(hidden, self.config.keep_prob, training, rng)
        scores, dense_cache = nn.dense_forward(
            dropped, self.params.value("out_w"), self.params.value("out_b"), "sigmoid"
        )
        return scores, (pool_cache, lstm_cache, mask, dense_cache)

    def _recurrent_stage_backward(self, cache, dz):
        pool_cache, lstm_cache, mask, dense_cache = cache
        dhidden = nn.dense_backward(
            dense_cache, dz, self.params.grad("out_w"), self.params.grad("out_b")
        )
        dhidden = nn.dropout_backward(mask, dhidden)
        dpooled = nn.bilstm_backward(
            lstm_cache, self._lstm_view("fwd"), self._lstm_view("bwd"), dhidden,
            self._lstm_view("fwd", grads=True), self._lstm_view("bwd", grads=True),
        )
        return nn.maxpool1d_backward(pool_cache, dpooled)

    def _forward_bilstm2(self, token_ids, training, rng):
        emb_cache, emb_shape, conv_cache, conv_out = self._conv_stage(token_ids)
        scores, rec_cache = self._recurrent_stage(conv_out, training, rng)
        return scores, (emb_cache, emb_shape, conv_cache, rec_cache)

    def _backward_bilstm2(self, cache, dz):
        emb_cache, emb_shape, conv_cache, rec_cache = cache
        dconv = self._recurrent_stage_backward(rec_cache, dz)
        demb = nn.conv1d_backward(
            conv_cache, dconv, self.params.grad("conv_w"), self.params.grad("conv_b")
        )
        nn.embedding_backward(emb_cache, demb, self.params.grad("embed"))

    def _forward_bilstm3(self, token_ids, training, rng):
        emb_cache, emb_shape, conv_cache, conv_out = self._conv_stage(token_ids)
        normed, bn_cache = nn.batchnorm_forward(
            conv_out,
            self.params.value("bn_gamma"), self.params.value("bn_beta"),
            self.buffers["bn_running_mean"], self.buffers["bn_running_var"],
            BN_MOMENTUM, BN_EPS, training,
        )
        scores, rec_cache = self._recurrent_stage(normed, training, rng)
        return scores, (emb_cache, emb_shape, conv_cache, bn_cache, rec_cache)

    def _backward_bilstm3(self, cache, dz):
        emb_cache, emb_shape, conv_cache, bn_cache, rec_cache = cache
        dnormed = self._recurrent_stage_backward(rec_cache, dz)
        dconv = nn.batchnorm_backward(
            bn_cache, dnormed, self.params.grad("bn_gamma"), self.params.grad("bn_beta")
        )
        demb = nn.conv1d_backward(
            conv_cache, dconv, self.params.grad("conv_w"), self.params.grad("conv_b")
        )
        nn.embedding_backward(emb_cache, demb, self.params.grad("embed"))

    # -- forward / backward, minibatch ---------------------------------------

    def forward_batch(self, ids_list, training: bool, rng=None):
        """Score a minibatch; returns (B, n_labels) scores plus a cache.

        For bilstm3 in training mode the minibatch's convolution outputs
        are normalized jointly, as batch statistics are defined over the
        whole minibatch.
        """
        if self.config.arch == "bilstm3" and training:
            return self._forward_batch_bilstm3(ids_list, rng)
        results = [self.forward_one(ids, training, rng) for ids in ids_list]
        scores = np.stack([r[0] for r in results])
        return scores, ("per_example", [r[1] for r in results])

    def backward_batch(self, cache, dz_rows) -> None:
        kind, payload = cache[0], cache[1:]
        if kind == "per_example":
            for one_cache, dz in zip(payload[0], dz_rows):
                self.backward_one(one_cache, dz)
            return
        self._backward_batch_bilstm3(payload, dz_rows)

    def _forward_batch_bilstm3(self, ids_list, rng):
        stage1 = [self._conv_stage(ids) for ids in ids_list]
        rows = np.concatenate([s[3] for s in stage1], axis=0)
        normed, bn_cache = nn.batchnorm_forward(
            rows,
            self.params.value("bn_gamma"), self.params.value("bn_beta"),
            self.buffers["bn_running_mean"], self.buffers["bn_running_var"],
            BN_MOMENTUM, BN_EPS, training=True,
        )
        tprime = stage1[0][3].shape[0]
        scores = []
        rec_caches = []
        for i in range(len(ids_list)):
            s, rec_cache = self._recurrent_stage(
                normed[i * tprime : (i + 1) * tprime], training=True, rng=rng
            )
            scores.append(s)
            rec_caches.append(rec_cache)
        scores = np.stack(scores)
        nn.assert_finite(scores, "bilstm3 scores")
        return scores, ("bilstm3_batch", stage1, bn_cache, tprime, rec_caches)

    def _backward_batch_bilstm3(self, payload, dz_rows) -> None:
        stage1, bn_cache, tprime, rec_caches = payload
        dnormed = np.zeros(
            (tprime * len(rec_caches), self.config.conv_filters), dtype=dz_rows[0].dtype
        )
        for i, (rec_cache, dz) in enumerate(zip(rec_caches, dz_rows)):
            dnormed[i * tprime : (i + 1) * tprime] = self._recurrent_stage_backward(
                rec_cache, dz
            )
        drows = nn.batchnorm_backward(
            bn_cache, dnormed, self.params.grad("bn_gamma"), self.params.grad("bn_beta")
        )
        for i, (emb_cache, emb_shape, conv_cache, _) in enumerate(stage1):
            demb = nn.conv1d_backward(
                conv_cache, drows[i * tprime : (i + 1) * tprime],
                self.params.grad("conv_w"), self.params.grad("conv_b"),
            )
            nn.embedding_backward(emb_cache, demb, self.params.grad("embed"))

    # -- diagnostics ---------------------------------------------------------

    def kink_margin(self, cache, eps: float = 1e-3) -> float:
        """Safety ratio of this forward pass for finite-difference probing.

        Piecewise-linear points (ReLU pre-activations at zero, near-ties
        inside pooling windows) make a central difference at step ``eps``
        meaningless if the probe can cross them. Each decision's distance
        to a flip is divided by a bound on how far a single-coordinate
        probe of size ``eps`` can move that quantity, so a return value
        above 1 means no probe can cross. Smooth architectures report
        infinity.
        """
        arch = self.config.arch
        if arch in ("fasttext", "bilstm1"):
            return float("inf")
        # A probe moves a conv pre-activation by at most ~eps times the
        # largest upstream activation/weight; 4x covers repeated tokens.
        z_ref = 4.0 * eps
        if arch == "cnn":
            ratios = []
            for conv_cache, _ in cache[2]:
                z = conv_cache[2]
                for col in range(z.shape[1]):
                    zs = np.sort(z[:, col])
                    top = zs[-1]
                    if top <= 0:
                        margin = -top
                    elif len(zs) > 1:
                        margin = min(top, top - zs[-2])
                    else:
                        margin = top
                    ratios.append(margin / z_ref)
            return float(min(ratios))
        # bilstm2 / bilstm3: conv relu margin plus pooling window gaps
        conv_cache = cache[2]
        z = conv_cache[2]
        ratios = [float(np.min(np.abs(z))) / z_ref] if z.size else []
        if arch == "bilstm3":
            rec_cache = cache[4]
            x_hat, inv_std, gamma = cache[3]
            # batch normalization multiplies a pre-activation shift by
            # roughly inv_std * |gamma| on its way to the pooling input
            gap_ref = z_ref * np.maximum(inv_std * np.abs(gamma), 1.0)
            tie_breaks_at_zero = False
        else:
            rec_cache = cache[3]
            gap_ref = z_ref
            tie_breaks_at_zero = True  # pool input is post-ReLU
        pool_x = rec_cache[0][0]
        pool = self.config.pool_size
        p = pool_x.shape[0] // pool
        if pool > 1 and p > 0:
            blocks = np.sort(pool_x[: p * pool].reshape(p, pool, -1), axis=1)
            gaps = (blocks[:, -1, :] - blocks[:, -2, :]) / gap_ref
            if tie_breaks_at_zero:
                # windows whose entries are all clamped at zero cannot move;
                # the relu margin term already guards their pre-activations
                live = blocks[:, -1, :] > 0
                if np.any(live):
                    ratios.append(float(gaps[live].min()))
            else:
                ratios.append(float(gaps.min()))
        return float(min(ratios)) if ratios else float("inf")

    # -- utilities -----------------------------------------------------------

    def param_count(self) -> int:
        return self.params.n_params()

    def astype(self, dtype) -> "Model":
        buffers = {k: v.astype(dtype) for k, v in self.buffers.items()}
        return Model(self.config, self.params.astype(dtype), buffers,
                     self.vocab, self.labels)


def build_model(config: ModelConfig, rng=None, vocab: Vocabulary | None = None,
                labels=LABELS) -> Model:
    """Allocate and initialize all parameter tensors for ``config``.

    Embeddings are uniform(-0.05, 0.05); dense and convolution kernels are
    Glorot-uniform; LSTM recurrent matrices are orthogonal with forget-gate
    bias 1. Initialization draws from ``rng`` in a fixed order, so equal
    seeds give bit-identical models.
    """
    config.validate()
    if vocab is not None and len(vocab) != config.vocab_size:
        raise ConfigError(
            f"vocabulary size {len(vocab)} does not match config.vocab_size "
            f"{config.vocab_size}"
        )
    if rng is None:
        rng = np.random.default_rng(0)
    p = nn.ParamStore()
    buffers: dict[str, np.ndarray] = {}
    c = config
    p.add("embed", nn.uniform_init(rng, (c.vocab_size, c.embed_dim)))

    feature_dim = c.embed_dim
    if c.arch == "cnn":
        for w in c.conv_widths:
            p.add(f"conv{w}_w",
                  nn.glorot_uniform(rng, w * c.embed_dim, c.conv_filters,
                                    (c.conv_filters, w, c.embed_dim)))
            p.add(f"conv{w}_b", np.zeros(c.conv_filters, dtype=nn.DTYPE))
        feature_dim = c.conv_filters * len(c.conv_widths)
    elif c.arch in ("bilstm2", "bilstm3"):
        w = c.conv_widths[0]
        p.add("conv_w",
              nn.glorot_uniform(rng, w * c.embed_dim, c.conv_filters,
                                (c.conv_filters, w, c.embed_dim)))
        p.add("conv_b", np.zeros(c.conv_filters, dtype=nn.DTYPE))
        if c.arch == "bilstm3":
            p.add("bn_gamma", np.ones(c.conv_filters, dtype=nn.DTYPE))
            p.add("bn_beta", np.zeros(c.conv_filters, dtype=nn.DTYPE))
            buffers["bn_running_mean"] = np.zeros(c.conv_filters, dtype=nn.DTYPE)
            buffers["bn_running_var"] = np.ones(c.conv_filters, dtype=nn.DTYPE)

    if c.arch.startswith("bilstm"):
        lstm_in = c.embed_dim if c.arch == "bilstm1" else c.conv_filters
        h = c.lstm_units
        for direction in ("fwd", "bwd"):
            for gate in nn.LSTM_GATES:
                p.add(f"lstm_{direction}_w{gate}",
                      nn.glorot_uniform(rng, lstm_in, h, (lstm_in, h)))
                p.add(f"lstm_{direction}_u{gate}", nn.orthogonal_init(rng, h))
                bias = np.full(h, 1.0, dtype=nn.DTYPE) if gate == "f" else \
                    np.zeros(h, dtype=nn.DTYPE)
                p.add(f"lstm_{direction}_b{gate}", bias)
        feature_dim = 2 * h

    p.add("out_w", nn.glorot_uniform(rng, feature_dim, c.n_labels,
                                     (feature_dim, c.n_labels)))
    p.add("out_b", np.zeros(c.n_labels, dtype=nn.DTYPE))
    return Model(config, p, buffers, vocab, labels)


def config_to_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["conv_widths"] = list(config.conv_widths)
    return d


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["conv_widths"] = tuple(d["conv_widths"])
    cfg = ModelConfig(**d)
    cfg.validate()
    return cfg
