"""MNIST IDX ingestion and latency encoding."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import NeuronParams, SpikeTrain, time_to_z

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DEFAULT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedIdxError(IdxFormatError):
    pass


class DimensionMismatchError(IdxFormatError):
    pass


@dataclass
class Dataset:
    images: np.ndarray   # (N, 784) uint8 intensities
    labels: np.ndarray   # (N,) class indices
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("image and label counts differ")

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.split)


def parse_idx(data: bytes) -> np.ndarray:
    """Decode an MNIST image (N, 784) or label (N,) file from raw bytes."""
    if len(data) < 8:
        raise TruncatedIdxError("file too short for an IDX header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise BadMagicError(f"unexpected magic number 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedIdxError("header cut short")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    if ndim == 3 and dims[1:] != (28, 28):
        raise DimensionMismatchError(f"expected 28x28 images, got {dims[1]}x{dims[2]}")
    expected = int(np.prod(dims))
    payload = len(data) - header
    if payload < expected:
        raise TruncatedIdxError(f"header promises {expected} bytes, payload has {payload}")
    if payload > expected:
        raise DimensionMismatchError(f"{payload - expected} trailing bytes after declared data")
    arr = np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)
    return arr.reshape(dims[0], -1).copy() if ndim == 3 else arr.copy()


def _read(path: Path) -> bytes:
    for candidate in (path, path.with_name(path.name + ".gz")):
        if candidate.exists():
            opener = gzip.open if candidate.suffix == ".gz" else open
            with opener(candidate, "rb") as f:
                return f.read()
    raise FileNotFoundError(f"missing MNIST file {path} (optionally .gz)")


def load_mnist(data_dir, split: str = "train", files: tuple[str, str] | None = None) -> Dataset:
    images_name, labels_name = files or DEFAULT_FILES[split]
    data_dir = Path(data_dir)
    images = parse_idx(_read(data_dir / images_name))
    labels = parse_idx(_read(data_dir / labels_name))
    if images.ndim != 2 or labels.ndim != 1:
        raise IdxFormatError("image/label files swapped")
    return Dataset(images, labels.astype(np.int64), split)


def latency_times(images, t_min: float = 0.0, t_max: float = 1.0) -> np.ndarray:
    """Invert and scale intensities so ink fires early and background at ``t_max``."""
    x = np.asarray(images, dtype=np.float64)
    if x.size and (x.min() < 0 or x.max() > 255):
        raise ValueError("intensities must lie in [0, 255]")
    if not t_min < t_max:
        raise ValueError("need t_min < t_max")
    return t_min + (t_max - t_min) * (255.0 - x) / 255.0


def latency_decode(times, t_min: float = 0.0, t_max: float = 1.0) -> np.ndarray:
    return 255.0 - 255.0 * (np.asarray(times) - t_min) / (t_max - t_min)


def latency_encode(image, params: NeuronParams, t_min: float = 0.0, t_max: float = 1.0,
                   drop_background: bool = False) -> SpikeTrain:
    """One spike per pixel, globally ordered.

    ``drop_background`` removes spikes at ``t_max``; with ``t_max = t_out`` they
    contribute nothing to any potential read out at ``t_out``.
    """
    t = latency_times(np.asarray(image).reshape(-1), t_min, t_max)
    n = t.size
    src = np.arange(n, dtype=np.int64)
    if drop_background:
        keep = t < t_max
        t, src = t[keep], src[keep]
    order = np.lexsort((src, t))
    return SpikeTrain(time_to_z(t[order], params), src[order],
                      np.zeros(src.size, dtype=np.int64), n)
