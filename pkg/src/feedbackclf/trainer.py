"""Training loops: per-example SGD for the linear model, minibatch Adam
for the rest.

Loss functions return the gradient with respect to the output layer's
pre-activations (the activation and loss derivatives are fused, which is
both cheaper and numerically safer than chaining them):

    softmax + NLL        dz = probs - onehot(target)
    sigmoid + mean BCE   dz = (scores - gold) / n_labels

The averaged-embedding model trains one example at a time with a linearly
decaying learning rate; a multi-labeled example contributes one gold label
drawn uniformly per visit. The convolutional and recurrent models train
with Adam on minibatches of the mean BCE, optionally early-stopping on
dev exact accuracy and restoring the best-dev epoch's parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .models import ConfigError, Model


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.001
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True
    early_stopping_patience: int | None = None

    def validate(self) -> None:
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.early_stopping_patience is not None and self.early_stopping_patience < 1:
            raise ConfigError("early_stopping_patience must be >= 1")


_TRAIN_DEFAULTS = {
    "fasttext": dict(optimizer="sgd", learning_rate=0.1, epochs=100, batch_size=1),
    "cnn": dict(optimizer="adam", learning_rate=0.001, epochs=10, batch_size=64),
    "bilstm1": dict(optimizer="adam", learning_rate=0.001, epochs=30, batch_size=64,
                    early_stopping_patience=5),
    "bilstm2": dict(optimizer="adam", learning_rate=0.001, epochs=30, batch_size=64,
                    early_stopping_patience=5),
    "bilstm3": dict(optimizer="adam", learning_rate=0.001, epochs=30, batch_size=64,
                    early_stopping_patience=5),
}


def default_train_config(arch: str, **overrides) -> TrainConfig:
    if arch not in _TRAIN_DEFAULTS:
        raise ConfigError(f"unknown architecture '{arch}'")
    kwargs = dict(_TRAIN_DEFAULTS[arch])
    for key, value in overrides.items():
        if value is None:
            continue
        kwargs[key] = value
    cfg = TrainConfig(**kwargs)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# losses (fused with the output activation)

def softmax_nll(probs, target: int):
    """Negative log likelihood of ``target`` under softmax ``probs``.

    Returns (loss, gradient wrt the softmax pre-activations).
    """
    p = max(float(probs[target]), 1e-12)
    dz = probs.copy()
    dz[target] -= 1
    return -float(np.log(p)), dz


def binary_cross_entropy(scores, gold_multihot):
    """Mean binary cross entropy of sigmoid ``scores`` against a multi-hot
    gold vector. Returns (loss, gradient wrt the sigmoid pre-activations)."""
    y = np.asarray(gold_multihot, dtype=scores.dtype)
    n = scores.shape[0]
    loss = -float(
        np.mean(
            y * np.log(np.maximum(scores, 1e-12))
            + (1 - y) * np.log(np.maximum(1 - scores, 1e-12))
        )
    )
    return loss, (scores - y) / n


# ---------------------------------------------------------------------------
# optimizers (update in place, then clear gradients)

def sgd_step(params, lr: float) -> None:
    for _, value, grad in params.items():
        value -= lr * grad
    params.zero_grads()


class AdamState:
    """First/second moment accumulators, one pair per parameter tensor."""

    def __init__(self, params):
        self.t = 0
        self.m = {name: np.zeros_like(v) for name, v, _ in params.items()}
        self.v = {name: np.zeros_like(v) for name, v, _ in params.items()}


def adam_step(params, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    state.t += 1
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t
    for name, value, grad in params.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        value -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    params.zero_grads()


# ---------------------------------------------------------------------------
# history

@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    dev_exact_accuracy: list = field(default_factory=list)
    dev_micro_f1: list = field(default_factory=list)
    best_epoch: int | None = None

    def to_json(self) -> str:
        """One JSON object per epoch (1-based), floats at six decimals,
        nulls where no dev set was evaluated."""

        def num(x) -> str:
            return "null" if x is None else f"{x:.6f}"

        rows = [
            "  {"
            + f'"epoch": {i + 1}, "train_loss": {num(self.train_loss[i])}, '
            + f'"dev_exact_accuracy": {num(self.dev_exact_accuracy[i])}, '
            + f'"dev_micro_f1": {num(self.dev_micro_f1[i])}'
            + "}"
            for i in range(len(self.train_loss))
        ]
        return "[\n" + ",\n".join(rows) + "\n]\n"


# ---------------------------------------------------------------------------
# the loop

def train(model: Model, train_examples, dev_examples=None,
          cfg: TrainConfig | None = None, rng=None):
    """Fit ``model`` in place; returns (model, TrainHistory).

    Examples must already carry ``token_ids``. The random generator drives
    epoch shuffling, dropout masks, and gold sampling for multi-labeled
    examples, so a fixed seed reproduces the run bit for bit.
    """
    if cfg is None:
        cfg = default_train_config(model.config.arch)
    cfg.validate()
    if not train_examples:
        raise ValueError("training set is empty")
    for ex in train_examples:
        if ex.token_ids is None:
            raise ValueError(f"example '{ex.id}' has no token ids; encode it first")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    n = len(train_examples)
    use_sgd = cfg.optimizer == "sgd"
    adam = None if use_sgd else AdamState(model.params)
    total_updates = cfg.epochs * n
    update_idx = 0
    history = TrainHistory()
    early = cfg.early_stopping_patience is not None and dev_examples
    best = None  # (dev accuracy, epoch, params snapshot, buffers snapshot)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        losses = []
        if use_sgd:
            for i in order:
                ex = train_examples[i]
                golds = ex.gold_indices()
                target = golds[rng.integers(len(golds))] if len(golds) > 1 else golds[0]
                scores, cache = model.forward_one(ex.token_ids, training=True, rng=rng)
                loss, dz = softmax_nll(scores, target)
                model.backward_one(cache, dz)
                sgd_step(model.params,
                         cfg.learning_rate * (1.0 - update_idx / total_updates))
                update_idx += 1
                losses.append(loss)
        else:
            for start in range(0, n, cfg.batch_size):
                batch = [train_examples[i] for i in order[start : start + cfg.batch_size]]
                scores, cache = model.forward_batch(
                    [ex.token_ids for ex in batch], training=True, rng=rng
                )
                dz_rows = []
                for s, ex in zip(scores, batch):
                    loss, dz = binary_cross_entropy(s, ex.gold)
                    losses.append(loss)
                    dz_rows.append(dz / len(batch))
                model.backward_batch(cache, dz_rows)
                adam_step(model.params, adam, cfg.learning_rate)
        history.train_loss.append(float(np.mean(losses)))

        if dev_examples:
            pred_sets = [{model.predict(e.token_ids).label_index} for e in dev_examples]
            gold_sets = [set(e.gold_indices()) for e in dev_examples]
            acc = metrics.exact_accuracy(pred_sets, gold_sets)
            history.dev_exact_accuracy.append(acc)
            history.dev_micro_f1.append(metrics.micro_f1(pred_sets, gold_sets).f1)
            if early:
                if best is None or acc > best[0]:
                    best = (acc, epoch, model.params.copy_values(),
                            {k: v.copy() for k, v in model.buffers.items()})
                elif epoch - best[1] >= cfg.early_stopping_patience:
                    break
        else:
            history.dev_exact_accuracy.append(None)
            history.dev_micro_f1.append(None)

    if early and best is not None:
        model.params.load_values(best[2])
        for key, value in best[3].items():
            model.buffers[key][...] = value
        history.best_epoch = best[1]
    return model, history
