"""Versioned binary checkpoints.

Layout (little-endian throughout)::

    magic      8 bytes  b"MSPKCKPT"
    version    u32
    config     u32 length + UTF-8 key = value text
    epoch      u32
    adam step  u64
    rng state  u32 length + UTF-8 JSON of the bit generator state
    layers     u32 count, then per layer: rows u32, cols u32,
               weights, first moment, second moment as f64[rows * cols]

Restoring a checkpoint and continuing gives bit-identical results to an
uninterrupted run.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig
from .optim import AdamState, SpikingModel

MAGIC = b"MSPKCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _put_blob(buf, data: bytes):
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def _get(buf, fmt):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise CheckpointError("checkpoint truncated")
    return struct.unpack(fmt, raw)


def _get_blob(buf) -> bytes:
    (n,) = _get(buf, "<I")
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("checkpoint truncated")
    return raw


def _get_array(buf, rows, cols) -> np.ndarray:
    n = rows * cols * 8
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("checkpoint truncated")
    return np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)


def dumps(model: SpikingModel, config: RunConfig) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _put_blob(buf, config.dumps().encode())
    buf.write(struct.pack("<IQ", model.epoch, model.adam.step))
    _put_blob(buf, json.dumps(model.rng.bit_generator.state).encode())
    buf.write(struct.pack("<I", len(model.weights)))
    for w, m, v in zip(model.weights, model.adam.m, model.adam.v):
        buf.write(struct.pack("<II", *w.shape))
        for arr in (w, m, v):
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> tuple[SpikingModel, RunConfig]:
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file")
    (version,) = _get(buf, "<I")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, this build reads {VERSION}")
    config = RunConfig.loads(_get_blob(buf).decode())
    epoch, step = _get(buf, "<IQ")
    rng_state = json.loads(_get_blob(buf).decode())
    (n_layers,) = _get(buf, "<I")
    weights, m, v = [], [], []
    for _ in range(n_layers):
        rows, cols = _get(buf, "<II")
        weights.append(_get_array(buf, rows, cols))
        m.append(_get_array(buf, rows, cols))
        v.append(_get_array(buf, rows, cols))
    if buf.read(1):
        raise CheckpointError("trailing bytes after checkpoint")
    shapes = [w.shape for w in weights]
    if list(zip(config.sizes[:-1], config.sizes[1:])) != shapes:
        raise CheckpointError("layer shapes disagree with the stored config")

    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    adam = AdamState(shapes, lr=config.lr, step=step, m=m, v=v)
    model = SpikingModel(weights, config.neuron_params(), config.engine_config(), adam, rng,
                         config.t_min, config.t_max, epoch)
    return model, config


def save(path, model: SpikingModel, config: RunConfig):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(model, config))
    tmp.replace(path)


def load(path) -> tuple[SpikingModel, RunConfig]:
    return loads(Path(path).read_bytes())
