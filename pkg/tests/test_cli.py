import csv
import gzip
import json
import struct

import numpy as np
import pytest

from multispike import checkpoint
from multispike.cli import main
from multispike.experiments import HIST_HEADER, METRICS_HEADER, SWEEP_HEADER, read_metrics

SMALL = ["--sizes", "784-12-10", "--init-spread", "0.6", "--batch-size", "25"]


@pytest.fixture(scope="module")
def mnist_dir(tmp_path_factory):
    """A miniature MNIST in IDX format: 100 train and 40 test images."""
    d = tmp_path_factory.mktemp("mnist")
    rng = np.random.default_rng(0)
    for prefix, n in (("train", 100), ("t10k", 40)):
        imgs = rng.integers(0, 256, (n, 784), dtype=np.uint8) * (rng.random((n, 784)) < 0.2)
        labels = rng.integers(0, 10, n).astype(np.uint8)
        with gzip.open(d / f"{prefix}-images-idx3-ubyte.gz", "wb") as f:
            f.write(struct.pack(">IIII", 0x803, n, 28, 28) + imgs.astype(np.uint8).tobytes())
        with gzip.open(d / f"{prefix}-labels-idx1-ubyte.gz", "wb") as f:
            f.write(struct.pack(">II", 0x801, n) + labels.tobytes())
    return d


def train(mnist_dir, out, *extra):
    return main(["train", "--data-dir", str(mnist_dir), "--out-dir", str(out), *SMALL, *extra])


def test_epochs_zero(mnist_dir, tmp_path):
    assert train(mnist_dir, tmp_path, "--epochs", "0") == 0
    assert (tmp_path / "checkpoint.bin").exists()
    assert (tmp_path / "metrics.csv").read_text() == ",".join(METRICS_HEADER) + "\n"
    model, cfg = checkpoint.load(tmp_path / "checkpoint.bin")
    assert model.epoch == 0 and cfg.sizes == (784, 12, 10)


def test_metrics_schema(mnist_dir, tmp_path):
    assert train(mnist_dir, tmp_path, "--epochs", "2") == 0
    rows = read_metrics(tmp_path / "metrics.csv")
    assert [r["epoch"] for r in rows] == [1, 2]
    with open(tmp_path / "metrics.csv") as f:
        assert next(csv.reader(f)) == METRICS_HEADER
    cfg_text = (tmp_path / "config.txt").read_text()
    assert "sizes = 784-12-10" in cfg_text


def test_resume_matches_uninterrupted(mnist_dir, tmp_path):
    train(mnist_dir, tmp_path / "a", "--epochs", "2")
    train(mnist_dir, tmp_path / "b", "--epochs", "1")
    assert main(["train", "--epochs", "2", "--resume", str(tmp_path / "b" / "checkpoint.bin")]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_deterministic_across_workers(mnist_dir, tmp_path):
    train(mnist_dir, tmp_path / "a", "--epochs", "1", "--n-jobs", "1")
    train(mnist_dir, tmp_path / "b", "--epochs", "1", "--n-jobs", "3")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_config_file_and_overrides(mnist_dir, tmp_path):
    (tmp_path / "run.cfg").write_text("tau_i = 1.6\nepochs = 1\nsingle_spike = true\n")
    out = tmp_path / "o"
    assert train(mnist_dir, out, "--config", str(tmp_path / "run.cfg"), "--set", "lam=0.0") == 0
    _, cfg = checkpoint.load(out / "checkpoint.bin")
    assert cfg.tau_i == 1.6 and cfg.lam == 0.0 and cfg.single_spike


def test_eval_and_spike_hist(mnist_dir, tmp_path, capsys):
    train(mnist_dir, tmp_path, "--epochs", "1", "--single-spike")
    ck = str(tmp_path / "checkpoint.bin")
    assert main(["eval", ck, "--data-dir", str(mnist_dir)]) == 0
    summary = json.loads((tmp_path / "eval_test.json").read_text())
    assert summary["samples"] == 40 and 0 <= summary["accuracy"] <= 1
    assert summary["max_spikes"] <= 1
    out = tmp_path / "h.csv"
    assert main(["spike-hist", ck, "--data-dir", str(mnist_dir), "--split", "train", "--out", str(out)]) == 0
    with open(out) as f:
        rows = list(csv.reader(f))
    assert rows[0] == HIST_HEADER
    assert sum(int(r[1]) for r in rows[1:]) == 100 * 12


def test_sweep(mnist_dir, tmp_path):
    code = main(["sweep-tau", "--data-dir", str(mnist_dir), "--out-dir", str(tmp_path), *SMALL,
                 "--epochs", "1", "--taus", "0.4,1.6", "--seeds", "0,1"])
    assert code == 0
    with open(tmp_path / "sweep.csv") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == SWEEP_HEADER
    assert [r["row"] for r in rows] == ["run", "run", "mean"] * 2
    assert (tmp_path / "tau0.4_seed1" / "metrics.csv").exists()


def test_sweep_single_tau(mnist_dir, tmp_path):
    main(["sweep-tau", "--data-dir", str(mnist_dir), "--out-dir", str(tmp_path), *SMALL,
          "--epochs", "1", "--taus", "0.8"])
    with open(tmp_path / "sweep.csv") as f:
        rows = [r for r in csv.DictReader(f) if r["row"] == "mean"]
    assert len(rows) == 1


def test_checks(tmp_path):
    report = tmp_path / "g.json"
    assert main(["gradcheck", "--cases", "3", "--report", str(report)]) == 0
    assert json.loads(report.read_text())["passed"]
    assert main(["gradcheck", "--cases", "3", "--fault", "flip_db"]) == 1
    assert main(["oracle-check", "--cases", "3", "--report", str(tmp_path / "o.json")]) == 0
    suites = json.loads((tmp_path / "o.json").read_text())["suites"]
    assert [s["suite"] for s in suites] == ["oracle", "root_residual"]


def test_exit_codes(mnist_dir, tmp_path):
    assert main(["train", "--tau-i", "0", "--data-dir", str(mnist_dir)]) == 3
    assert main(["train", "--set", "nonsense=1"]) == 3
    assert main(["train", "--data-dir", str(tmp_path / "none"), "--out-dir", str(tmp_path / "x")]) == 4
    train(mnist_dir, tmp_path / "c", "--epochs", "0")
    data = bytearray((tmp_path / "c" / "checkpoint.bin").read_bytes())
    data[8:12] = struct.pack("<I", 42)
    (tmp_path / "old.bin").write_bytes(bytes(data))
    assert main(["eval", str(tmp_path / "old.bin"), "--data-dir", str(mnist_dir)]) == 5
    with pytest.raises(SystemExit):
        main(["no-such-command"])
