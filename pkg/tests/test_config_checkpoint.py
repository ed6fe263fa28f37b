import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multispike import checkpoint
from multispike.config import ConfigError, RunConfig
from multispike.optim import SpikingModel, train_epoch


class TestRunConfig:
    def test_defaults_are_the_published_setup(self):
        c = RunConfig()
        assert c.sizes == (784, 400, 10) and c.tau_i == 0.8 and c.p == 2.0 and c.t_out == 1.0
        assert (c.lam, c.sigma, c.dead_fraction) == (0.01, 1e-4, 0.1)
        assert (c.lr, c.epochs, c.batch_size) == (1e-3, 100, 100)
        assert (c.init_mean, c.init_spread, c.init_reading) == (0.03, 0.3, "std")

    def test_round_trip(self):
        c = RunConfig(sizes=(784, 64, 10), tau_i=0.1 + 0.2, single_spike=True, seed=7, out_dir="x y")
        assert RunConfig.loads(c.dumps()) == c

    @settings(max_examples=50)
    @given(st.floats(1e-3, 10.0), st.floats(0.0, 1.0), st.integers(1, 500), st.booleans())
    def test_round_trip_property(self, tau, lam, batch, single):
        c = RunConfig(tau_i=tau, lam=lam, batch_size=batch, single_spike=single)
        assert RunConfig.loads(c.dumps()) == c

    def test_comments_and_partial_files(self):
        c = RunConfig.loads("# a run\n tau_i = 1.6  # slower\nsingle_spike = yes\n")
        assert c.tau_i == 1.6 and c.single_spike and c.sizes == (784, 400, 10)

    @pytest.mark.parametrize("text", ["tau_i = -1", "bogus = 3", "epochs = many", "p = 3",
                                      "n1 = 20", "init_reading = both", "line without equals"])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            RunConfig.loads(text)

    def test_derived_objects(self):
        c = RunConfig(tau_i=0.5, n1=2, n2=5, single_spike=True)
        assert c.neuron_params().tau_v == 0.25
        e = c.engine_config()
        assert e.z_out == pytest.approx(np.exp(2.0)) and e.caps == (1, 1)


def tiny_model(seed=0):
    c = RunConfig(sizes=(784, 8, 10), seed=seed, init_spread=0.6)
    m = SpikingModel.create(c.sizes, c.neuron_params(), c.engine_config(), seed=c.seed, lr=c.lr,
                            init_spread=c.init_spread)
    return m, c


def toy(n=40):
    rng = np.random.default_rng(1)
    return rng.integers(0, 256, (n, 784)), rng.integers(0, 10, n)


class TestCheckpoint:
    def test_round_trip(self):
        m, c = tiny_model()
        x, y = toy()
        train_epoch(m, x, y, batch_size=20)
        m2, c2 = checkpoint.loads(checkpoint.dumps(m, c))
        assert c2 == c and m2.epoch == 1 and m2.adam.step == 2
        for a, b in zip(m.weights + m.adam.m + m.adam.v, m2.weights + m2.adam.m + m2.adam.v):
            assert np.array_equal(a, b)
        assert m2.rng.bit_generator.state == m.rng.bit_generator.state

    def test_resume_is_bit_identical(self, tmp_path):
        x, y = toy()
        straight, _ = tiny_model()
        ref = [train_epoch(straight, x, y, batch_size=20).loss for _ in range(2)]
        m, c = tiny_model()
        first = train_epoch(m, x, y, batch_size=20).loss
        checkpoint.save(tmp_path / "ck.bin", m, c)
        resumed, _ = checkpoint.load(tmp_path / "ck.bin")
        second = train_epoch(resumed, x, y, batch_size=20).loss
        assert [first, second] == ref
        assert all(np.array_equal(a, b) for a, b in zip(straight.weights, resumed.weights))

    def test_little_endian_layout(self):
        m, c = tiny_model()
        data = checkpoint.dumps(m, c)
        assert data[:8] == checkpoint.MAGIC
        assert struct.unpack("<I", data[8:12])[0] == checkpoint.VERSION
        (n_cfg,) = struct.unpack("<I", data[12:16])
        off = 16 + n_cfg
        epoch, step = struct.unpack("<IQ", data[off:off + 12])
        assert (epoch, step) == (0, 0)
        off += 12
        (n_rng,) = struct.unpack("<I", data[off:off + 4])
        off += 4 + n_rng
        (layers,) = struct.unpack("<I", data[off:off + 4])
        rows, cols = struct.unpack("<II", data[off + 4:off + 12])
        assert (layers, rows, cols) == (2, 784, 8)
        first = np.frombuffer(data[off + 12:off + 12 + 8 * rows * cols], dtype="<f8").reshape(rows, cols)
        assert np.array_equal(first, m.weights[0])

    def test_version_mismatch(self):
        m, c = tiny_model()
        data = bytearray(checkpoint.dumps(m, c))
        data[8:12] = struct.pack("<I", 99)
        with pytest.raises(checkpoint.CheckpointVersionError):
            checkpoint.loads(bytes(data))

    @pytest.mark.parametrize("cut", [4, 20, -8])
    def test_corrupt(self, cut):
        m, c = tiny_model()
        data = checkpoint.dumps(m, c)
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.loads(data[:cut])
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.loads(data + b"x")
