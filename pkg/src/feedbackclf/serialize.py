"""Single-file binary serialization of trained models.

Layout (all integers little-endian):

    bytes 0-3   magic b"OSCF"
    bytes 4-7   u32 format version (currently 1)
    bytes 8-15  u64 byte length of the JSON header
    ...         UTF-8 JSON header: architecture config, label names,
                vocabulary, and the tensor manifest
    ...         one record per tensor, parameters first (in parameter
                order) then buffers:
                    u32 name length, name bytes,
                    u32 rank, u32 dims...,
                    raw float32 data, C order

Loading rebuilds the model from the header's config and copies each
tensor into the freshly allocated parameter store in place, so the loaded
model is structurally identical to one built from scratch.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .corpus import Vocabulary
from .models import Model, build_model, config_to_dict, config_from_dict

MAGIC = b"OSCF"
VERSION = 1


class ModelFileError(Exception):
    """Malformed or truncated model file."""


class ModelVersionError(ModelFileError):
    """Model file written by an incompatible format version."""


def _vocab_to_dict(vocab: Vocabulary | None):
    if vocab is None:
        return None
    return {
        "id_to_token": list(vocab.id_to_token),
        "min_count": vocab.min_count,
        "max_size": vocab.max_size,
    }


def _vocab_from_dict(d) -> Vocabulary | None:
    if d is None:
        return None
    id_to_token = list(d["id_to_token"])
    return Vocabulary(
        # ids 0 and 1 are the reserved PAD/UNK rows, never lookup targets
        token_to_id={tok: i for i, tok in enumerate(id_to_token) if i >= 2},
        id_to_token=id_to_token,
        min_count=d["min_count"],
        max_size=d["max_size"],
    )


def _tensor_record(name: str, array: np.ndarray) -> bytes:
    name_bytes = name.encode("utf-8")
    parts = [struct.pack("<I", len(name_bytes)), name_bytes,
             struct.pack("<I", array.ndim)]
    parts += [struct.pack("<I", dim) for dim in array.shape]
    parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(model: Model, path) -> None:
    header = {
        "config": config_to_dict(model.config),
        "labels": list(model.labels),
        "vocab": _vocab_to_dict(model.vocab),
        "params": model.params.names(),
        "buffers": sorted(model.buffers),
    }
    header_bytes = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name, value, _ in model.params.items():
            fh.write(_tensor_record(name, value))
        for name in sorted(model.buffers):
            fh.write(_tensor_record(name, model.buffers[name]))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError("truncated model file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def done(self) -> bool:
        return self.pos == len(self.data)


def _read_tensor(reader: _Reader):
    name = reader.take(reader.u32()).decode("utf-8")
    rank = reader.u32()
    shape = tuple(reader.u32() for _ in range(rank))
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = np.frombuffer(reader.take(count * 4), dtype="<f4").reshape(shape)
    return name, data


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != MAGIC:
        raise ModelVersionError(f"not a model file: bad magic in {path}")
    version = reader.u32()
    if version != VERSION:
        raise ModelVersionError(
            f"unsupported model file version {version} (supported: {VERSION})"
        )
    try:
        header = json.loads(reader.take(reader.u64()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ModelFileError(f"corrupt model header: {err}") from err

    config = config_from_dict(header["config"])
    model = build_model(config, np.random.default_rng(0),
                        vocab=_vocab_from_dict(header["vocab"]),
                        labels=tuple(header["labels"]))
    if set(header["params"]) != set(model.params.names()) or \
            set(header["buffers"]) != set(model.buffers):
        raise ModelFileError("model header names do not match the architecture")

    tensors = {}
    while not reader.done():
        name, data = _read_tensor(reader)
        tensors[name] = data

    expected = set(header["params"]) | set(header["buffers"])
    if set(tensors) != expected:
        missing = expected - set(tensors)
        extra = set(tensors) - expected
        raise ModelFileError(
            f"tensor manifest mismatch: missing {sorted(missing)}, "
            f"unexpected {sorted(extra)}"
        )
    for name in header["params"]:
        target = model.params.value(name)
        if tensors[name].shape != target.shape:
            raise ModelFileError(
                f"tensor '{name}' has shape {tensors[name].shape}, "
                f"expected {target.shape}"
            )
        target[...] = tensors[name]
    for name in header["buffers"]:
        target = model.buffers[name]
        if tensors[name].shape != target.shape:
            raise ModelFileError(
                f"tensor '{name}' has shape {tensors[name].shape}, "
                f"expected {target.shape}"
            )
        target[...] = tensors[name]
    return model
