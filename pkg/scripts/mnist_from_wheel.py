"""Rebuild the four standard MNIST IDX files from the ``mnist-hub`` wheel.

The wheel ships the classic ``mnist.pkl.gz`` (50k/10k/10k split, pixels stored
as ``value / 256``). Train and validation are concatenated back into the
original 60000-image training file; pixel bytes are recovered exactly.

    pip download --no-deps -d /tmp/wheel mnist-hub
    python scripts/mnist_from_wheel.py /tmp/wheel/mnist_hub-*.whl data/mnist
"""
import gzip
import io
import pickle
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.open(path, "wb") as f:
        f.write(header + array.astype(np.uint8).tobytes())


def main(wheel, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        raw = zf.read("mnist/data/mnist.pkl.gz")
    train, valid, test = pickle.load(gzip.open(io.BytesIO(raw)), encoding="latin1")
    x_train = np.concatenate([train[0], valid[0]])
    y_train = np.concatenate([train[1], valid[1]])
    for name, x, y in (("train", x_train, y_train), ("t10k", test[0], test[1])):
        pixels = np.rint(x * 256.0)
        assert np.array_equal(pixels, x * 256.0) and pixels.max() <= 255
        write_idx(out / f"{name}-images-idx3-ubyte.gz", pixels.reshape(-1, 28, 28), 0x803)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", y, 0x801)
        print(f"{name}: {len(y)} samples")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
