"""Training runs with on-disk outputs: metrics CSV, checkpoints, histograms, sweeps.

An output directory holds ``config.txt``, ``metrics.csv`` and
``checkpoint.bin`` (overwritten after every epoch).
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ConfigError, RunConfig
from .data import Dataset, load_mnist
from .estimator import SpikingClassifier
from .optim import evaluate

METRICS_HEADER = ["epoch", "train_loss", "train_accuracy", "test_accuracy", "mean_spikes",
                  "test_mean_spikes", "dead_fraction", "truncated", "tangency_clips"]
HIST_HEADER = ["spikes", "pairs", "fraction"]
SWEEP_HEADER = ["row", "tau_i", "seed", "test_accuracy", "test_accuracy_stderr", "mean_spikes"]


def _fmt(value) -> str:
    # repr keeps full precision and never depends on the locale
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def load_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    train = load_mnist(cfg.data_dir, "train")
    test = load_mnist(cfg.data_dir, "test")
    if cfg.train_samples:
        train = train.subset(cfg.train_samples)
    if cfg.test_samples:
        test = test.subset(cfg.test_samples)
    return train, test


def train_run(cfg: RunConfig, data=None, resume=None, log=None) -> list[dict]:
    """Train ``cfg.epochs`` epochs in total, writing outputs to ``cfg.out_dir``.

    ``resume`` is a checkpoint path; training continues from its epoch with
    the stored weights, optimizer and RNG state, and appends to the metrics
    file. The stored network shape must match ``cfg``.
    """
    train, test = data or load_data(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if resume is not None:
        model, saved = checkpoint.load(resume)
        if saved.sizes != cfg.sizes:
            raise ConfigError(f"checkpoint has sizes {saved.sizes}, config asks for {cfg.sizes}")
    else:
        model = SpikingClassifier.from_run_config(cfg)._init_model(cfg.sizes[0], cfg.sizes[-1])
        with open(out / "metrics.csv", "w", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow(METRICS_HEADER)
        checkpoint.save(out / "checkpoint.bin", model, cfg)
    cfg.save(out / "config.txt")
    # labels index the output neurons directly, so every class exists up front
    clf = SpikingClassifier.from_model(model, cfg)

    rows = []

    def on_epoch(est, record):
        ev = evaluate(est.model_, test.images, test.labels, n_jobs=cfg.n_jobs)
        row = dict(record, test_accuracy=ev.accuracy, test_mean_spikes=ev.mean_spikes)
        rows.append(row)
        with open(out / "metrics.csv", "a", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow([_fmt(row[k]) for k in METRICS_HEADER])
        checkpoint.save(out / "checkpoint.bin", est.model_, cfg)
        if log:
            log(f"epoch {row['epoch']}: loss {row['train_loss']:.4f} "
                f"train {row['train_accuracy']:.4f} test {row['test_accuracy']:.4f} "
                f"spikes {row['mean_spikes']:.3f} dead {row['dead_fraction']:.3f}")

    clf.fit(train.images, train.labels, on_epoch=on_epoch)
    return rows


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: (int(v) if k in ("epoch", "truncated", "tangency_clips") else float(v))
                 for k, v in row.items()} for row in csv.DictReader(f)]


def spike_histogram(counts) -> np.ndarray:
    """Number of (sample, neuron) pairs with each spike count, index = count."""
    counts = np.concatenate([np.asarray(c).ravel() for c in counts]) if isinstance(counts, list) \
        else np.asarray(counts).ravel()
    return np.bincount(counts.astype(np.int64), minlength=1)


def write_histogram(path, hist: np.ndarray):
    total = hist.sum()
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HIST_HEADER)
        for k, n in enumerate(hist):
            w.writerow([k, int(n), _fmt(n / total if total else 0.0)])


def sweep_tau(cfg: RunConfig, taus, seeds, data=None, log=None) -> list[dict]:
    """One run per (tau, seed) under ``out_dir/tau<tau>_seed<seed>``, plus aggregates."""
    data = data or load_data(cfg)
    base = Path(cfg.out_dir)
    rows = []
    for tau in taus:
        per_seed = []
        for seed in seeds:
            run_cfg = cfg.replace(tau_i=float(tau), seed=int(seed),
                                  out_dir=str(base / f"tau{tau}_seed{seed}"))
            last = train_run(run_cfg, data, log=log)[-1] if run_cfg.epochs else None
            acc = last["test_accuracy"] if last else math.nan
            spikes = last["test_mean_spikes"] if last else math.nan
            per_seed.append((acc, spikes))
            rows.append({"row": "run", "tau_i": float(tau), "seed": int(seed), "test_accuracy": acc,
                         "test_accuracy_stderr": "", "mean_spikes": spikes})
        accs = np.array([a for a, _ in per_seed])
        stderr = float(accs.std(ddof=1) / math.sqrt(accs.size)) if accs.size > 1 else 0.0
        rows.append({"row": "mean", "tau_i": float(tau), "seed": "", "test_accuracy": float(accs.mean()),
                     "test_accuracy_stderr": stderr,
                     "mean_spikes": float(np.mean([s for _, s in per_seed]))})
    base.mkdir(parents=True, exist_ok=True)
    with open(base / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in SWEEP_HEADER])
    return rows
