"""Layer primitives with hand-written forward and backward passes.

Arrays are row-major numpy arrays, float32 in production. Every op keeps
the dtype of its inputs, so the gradient checker can run identical code on
float64 copies. Backward functions accumulate parameter gradients into the
buffers they are handed and return the gradient with respect to the layer
input.

Shape conventions (single example, no batch axis):
    embedding   ids (T,) x table (V, D)      -> (T, D)
    average     (T, D)                       -> (D,)
    conv1d      (T, D) x (K, w, D), (K,)     -> (T - w + 1, K)
    maxpool1d   (T, K), pool p               -> (T // p, K)
    bilstm      (T, D)                       -> (2H,)
    dense       (D,) x (D, C), (C,)          -> (C,)
    batchnorm   (B, K)                       -> (B, K)
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float32

LSTM_GATES = ("i", "f", "g", "o")


def tensor(values, dtype=DTYPE) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=dtype)


def assert_finite(x, what: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")


def sigmoid(z):
    """Numerically stable logistic function (sign-split formulation)."""
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(z):
    """Shift-stabilized softmax over a 1-D array."""
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


class ParamStore:
    """Named parameter tensors, each paired with a same-shape gradient buffer.

    Iteration order is insertion order, which optimizers and serialization
    rely on for determinism.
    """

    def __init__(self):
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._values:
            raise ValueError(f"duplicate parameter name '{name}'")
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def value(self, name: str) -> np.ndarray:
        return self._values[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def names(self) -> list[str]:
        return list(self._values)

    def items(self):
        for name, value in self._values.items():
            yield name, value, self._grads[name]

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0

    def n_params(self) -> int:
        return sum(v.size for v in self._values.values())

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore()
        for name, value, _ in self.items():
            out.add(name, value.astype(dtype))
        return out

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self._values.items()}

    def load_values(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, value in snapshot.items():
            self._values[name][...] = value


# ---------------------------------------------------------------------------
# initializers

def uniform_init(rng, shape, scale=0.05, dtype=DTYPE):
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def glorot_uniform(rng, fan_in, fan_out, shape, dtype=DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal_init(rng, n, dtype=DTYPE):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix signs so the result is unique
    return q.astype(dtype)


# ---------------------------------------------------------------------------
# embedding

def embedding_forward(ids, emb):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= emb.shape[0]):
        raise ValueError(
            f"token id out of range for embedding table with {emb.shape[0]} rows"
        )
    return emb[ids], ids


def embedding_backward(ids, dout, demb) -> None:
    np.add.at(demb, ids, dout)


# ---------------------------------------------------------------------------
# averaging (bag of embeddings)

def average_forward(x):
    if x.shape[0] == 0:
        raise ValueError("cannot average an empty sequence")
    return x.mean(axis=0), x.shape[0]


def average_backward(t, dout):
    return np.broadcast_to(dout / t, (t, dout.shape[0]))


# ---------------------------------------------------------------------------
# 1-D convolution ("valid", stride 1, optional ReLU)

def conv1d_forward(x, w, b, relu: bool):
    t, d = x.shape
    k, width, d2 = w.shape
    if d != d2:
        raise ValueError(f"input dim {d} does not match filter dim {d2}")
    if t < width:
        raise ValueError(
            f"sequence length {t} is shorter than filter width {width}; "
            "increase max_len or use a smaller width"
        )
    # windows[t] is x[t : t + width] flattened; (T', width * D)
    windows = np.lib.stride_tricks.sliding_window_view(x, width, axis=0)
    windows = windows.transpose(0, 2, 1).reshape(t - width + 1, width * d)
    w2 = w.reshape(k, width * d)
    z = windows @ w2.T + b
    out = np.maximum(z, 0) if relu else z
    cache = (windows, w2, z if relu else None, t, width, d)
    return out, cache


def conv1d_backward(cache, dout, dw, db):
    windows, w2, z, t, width, d = cache
    dz = dout * (z > 0) if z is not None else dout
    db += dz.sum(axis=0)
    dw += (dz.T @ windows).reshape(dw.shape)
    dwindows = dz @ w2  # (T', width * D)
    tprime = dwindows.shape[0]
    dx = np.zeros((t, d), dtype=dout.dtype)
    for j in range(width):
        dx[j : j + tprime] += dwindows[:, j * d : (j + 1) * d]
    return dx


# ---------------------------------------------------------------------------
# pooling

def maxpool1d_forward(x, pool: int):
    t, k = x.shape
    if pool < 1:
        raise ValueError(f"pool size must be >= 1, got {pool}")
    if t < pool:
        raise ValueError(f"sequence length {t} is shorter than pool size {pool}")
    p = t // pool
    blocks = x[: p * pool].reshape(p, pool, k)
    arg = blocks.argmax(axis=1)  # first index on ties
    out = np.take_along_axis(blocks, arg[:, None, :], axis=1)[:, 0, :]
    return out, (x, pool, arg)


def maxpool1d_backward(cache, dout):
    x, pool, arg = cache
    t, k = x.shape
    p = arg.shape[0]
    dx = np.zeros((t, k), dtype=dout.dtype)
    blocks = dx[: p * pool].reshape(p, pool, k)
    np.put_along_axis(blocks, arg[:, None, :], dout[:, None, :], axis=1)
    return dx


def global_maxpool_forward(x):
    if x.shape[0] < 1:
        raise ValueError("cannot pool an empty sequence")
    arg = x.argmax(axis=0)
    out = np.take_along_axis(x, arg[None, :], axis=0)[0]
    return out, (x.shape, arg)


def global_maxpool_backward(cache, dout):
    shape, arg = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    np.put_along_axis(dx, arg[None, :], dout[None, :], axis=0)
    return dx


# ---------------------------------------------------------------------------
# LSTM
#
# Gate parameters come as a dict {"wi", "ui", "bi", "wf", ..., "bo"} with
# input kernels (D, H), recurrent kernels (H, H), biases (H,). Gradients
# accumulate into a same-keyed dict of buffers.

def lstm_step(x, h_prev, c_prev, p):
    if x.shape[0] != p["wi"].shape[0]:
        raise ValueError(
            f"input dim {x.shape[0]} does not match kernel rows {p['wi'].shape[0]}"
        )
    i = sigmoid(x @ p["wi"] + h_prev @ p["ui"] + p["bi"])
    f = sigmoid(x @ p["wf"] + h_prev @ p["uf"] + p["bf"])
    g = np.tanh(x @ p["wg"] + h_prev @ p["ug"] + p["bg"])
    o = sigmoid(x @ p["wo"] + h_prev @ p["uo"] + p["bo"])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    cache = (x, h_prev, c_prev, i, f, g, o, c)
    return h, c, cache


def lstm_step_backward(cache, p, dh, dc, grads):
    x, h_prev, c_prev, i, f, g, o, c = cache
    tc = np.tanh(c)
    do = dh * tc
    dc_total = dc + dh * o * (1 - tc * tc)
    di = dc_total * g
    dg = dc_total * i
    df = dc_total * c_prev
    dc_prev = dc_total * f
    da = {
        "i": di * i * (1 - i),
        "f": df * f * (1 - f),
        "g": dg * (1 - g * g),
        "o": do * o * (1 - o),
    }
    dx = np.zeros_like(x)
    dh_prev = np.zeros_like(h_prev)
    for gate in LSTM_GATES:
        grads["w" + gate] += np.outer(x, da[gate])
        grads["u" + gate] += np.outer(h_prev, da[gate])
        grads["b" + gate] += da[gate]
        dx += da[gate] @ p["w" + gate].T
        dh_prev += da[gate] @ p["u" + gate].T
    return dx, dh_prev, dc_prev


def lstm_forward(xs, p):
    """Run a full sequence (T, D); return the final hidden state and caches."""
    h = np.zeros(p["ui"].shape[0], dtype=xs.dtype)
    c = np.zeros_like(h)
    caches = []
    for t in range(xs.shape[0]):
        h, c, cache = lstm_step(xs[t], h, c, p)
        caches.append(cache)
    return h, caches


def lstm_backward(caches, p, dh_last, grads):
    """Backpropagation through time from a gradient on the final hidden state."""
    dh = dh_last
    dc = np.zeros_like(dh_last)
    dxs = []
    for cache in reversed(caches):
        dx, dh, dc = lstm_step_backward(cache, p, dh, dc, grads)
        dxs.append(dx)
    return np.stack(dxs[::-1])


def bilstm_forward(xs, fwd_p, bwd_p):
    """Concatenate final hidden states of a forward and a reversed pass."""
    if xs.shape[0] < 1:
        raise ValueError("bilstm needs at least one timestep")
    h_f, caches_f = lstm_forward(xs, fwd_p)
    h_b, caches_b = lstm_forward(xs[::-1], bwd_p)
    return np.concatenate([h_f, h_b]), (caches_f, caches_b)


def bilstm_backward(cache, fwd_p, bwd_p, dout, fwd_grads, bwd_grads):
    caches_f, caches_b = cache
    h = len(dout) // 2
    dx_f = lstm_backward(caches_f, fwd_p, dout[:h], fwd_grads)
    dx_b = lstm_backward(caches_b, bwd_p, dout[h:], bwd_grads)
    return dx_f + dx_b[::-1]


# ---------------------------------------------------------------------------
# dense

def dense_forward(x, w, b, activation: str = "none"):
    if x.shape[0] != w.shape[0]:
        raise ValueError(f"input dim {x.shape[0]} does not match weight rows {w.shape[0]}")
    z = x @ w + b
    if activation == "softmax":
        out = softmax(z)
    elif activation == "sigmoid":
        out = sigmoid(z)
    elif activation == "none":
        out = z
    else:
        raise ValueError(f"unknown activation '{activation}'")
    return out, (x, w)


def dense_backward(cache, dz, dw, db):
    """Backward from a gradient on the pre-activation z (losses are fused
    with the output activation, see the trainer's loss functions)."""
    x, w = cache
    dw += np.outer(x, dz)
    db += dz
    return w @ dz


# ---------------------------------------------------------------------------
# dropout (inverted: scaled at train time, identity at inference)

def dropout_forward(x, keep_prob: float, training: bool, rng=None):
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob >= 1.0:
        return x, None
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype) / x.dtype.type(keep_prob)
    return x * mask, mask


def dropout_backward(mask, dout):
    return dout if mask is None else dout * mask


# ---------------------------------------------------------------------------
# batch normalization (per feature over rows; biased batch variance)

def batchnorm_forward(
    x, gamma, beta, running_mean, running_var, momentum, eps, training: bool
):
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch normalization needs at least 2 rows in training")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = gamma * x_hat + beta
    return out, (x_hat, inv_std, gamma)


def batchnorm_backward(cache, dout, dgamma, dbeta):
    x_hat, inv_std, gamma = cache
    b = dout.shape[0]
    dgamma += (dout * x_hat).sum(axis=0)
    dbeta += dout.sum(axis=0)
    return (gamma * inv_std / b) * (
        b * dout - dout.sum(axis=0) - x_hat * (dout * x_hat).sum(axis=0)
    )
