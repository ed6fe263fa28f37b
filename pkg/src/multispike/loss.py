"""Cross-entropy on output potentials plus the dead-neuron and output-norm terms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import log_softmax


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.01
    sigma: float = 1e-4
    dead_fraction: float = 0.1
    # maps per-sample spike counts (batch, J) to 0/1 flags (J,); None -> dead-fraction rule
    count_condition: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.lam < 0 or self.sigma < 0:
            raise ValueError("lam and sigma must be nonnegative")
        if not 0.0 <= self.dead_fraction <= 1.0:
            raise ValueError("dead_fraction must lie in [0, 1]")


def softmax_cross_entropy(v_out, label: int):
    v = np.asarray(v_out, dtype=np.float64)
    logp = log_softmax(v)
    grad = np.exp(logp)
    grad[label] -= 1.0
    return float(-logp[label]), grad


def dead_neuron_flags(spike_counts, config: LossConfig = LossConfig()) -> np.ndarray:
    """Flag neurons that fired on fewer than ``dead_fraction`` of the batch's samples."""
    counts = np.atleast_2d(np.asarray(spike_counts))
    if counts.shape[0] == 0:
        raise ValueError("mini-batch must be nonempty")
    if config.count_condition is not None:
        return np.asarray(config.count_condition(counts), dtype=np.int64)
    responsive = np.count_nonzero(counts >= 1, axis=0)
    return (responsive < config.dead_fraction * counts.shape[0]).astype(np.int64)


def spike_count_penalty(v_hidden, flags, v_th: float = 1.0):
    v = np.asarray(v_hidden, dtype=np.float64)
    flags = np.asarray(flags, dtype=np.float64)
    if v.shape != flags.shape:
        raise ValueError("v_hidden and flags must have the same length")
    n = v.size
    loss = float(flags @ (v_th - v)) / n
    return loss, -flags / n


def total_loss(v_out, v_hidden, label: int, counts, config: LossConfig = LossConfig(),
               v_th: float = 1.0, flags=None):
    """Single-sample objective.

    ``v_hidden`` and ``counts`` may be arrays or lists of arrays (one per hidden
    layer). Precomputed batch-level ``flags`` override the ones derived from
    ``counts``. Returns ``(loss, grad_v_out, grad_v_hidden)``.
    """
    v_out = np.asarray(v_out, dtype=np.float64)
    single = not isinstance(v_hidden, (list, tuple))
    hiddens = [v_hidden] if single else list(v_hidden)
    if flags is None:
        cnts = [counts] if single else list(counts)
        flags = [dead_neuron_flags(c, config) for c in cnts]
    elif single:
        flags = [flags]
    ce, g_out = softmax_cross_entropy(v_out, label)
    n_out = v_out.size
    loss = ce + config.sigma * float(v_out @ v_out) / n_out
    g_out = g_out + 2.0 * config.sigma * v_out / n_out
    g_hidden = []
    for vh, f in zip(hiddens, flags):
        lc, g = spike_count_penalty(vh, f, v_th)
        loss += config.lam * lc
        g_hidden.append(config.lam * g)
    return loss, g_out, (g_hidden[0] if single else g_hidden)


def batch_loss(v_out, v_hidden, labels, counts, config: LossConfig = LossConfig(), v_th: float = 1.0):
    """Mini-batch objective.

    Cross-entropy and the norm term are averaged over samples; the penalty is
    evaluated once per batch on the mean hidden potential, which hands every
    sample ``1 / batch`` of each flagged neuron's gradient.

    ``v_out`` is (B, O); ``v_hidden`` and ``counts`` are lists over hidden
    layers of (B, J) arrays. Returns loss, grads w.r.t. v_out and v_hidden, flags.
    """
    v_out = np.asarray(v_out, dtype=np.float64)
    labels = np.asarray(labels)
    n_batch, n_out = v_out.shape
    logp = log_softmax(v_out, axis=1)
    rows = np.arange(n_batch)
    ce = -logp[rows, labels]
    g_out = np.exp(logp)
    g_out[rows, labels] -= 1.0
    norm = np.sum(v_out * v_out, axis=1) / n_out
    loss = float(np.mean(ce + config.sigma * norm))
    g_out = (g_out + 2.0 * config.sigma * v_out / n_out) / n_batch
    g_hidden, flags = [], []
    for vh, c in zip(v_hidden, counts):
        f = dead_neuron_flags(c, config)
        lc, g = spike_count_penalty(np.mean(vh, axis=0), f, v_th)
        loss += config.lam * lc
        g_hidden.append(np.broadcast_to(config.lam * g / n_batch, vh.shape).copy())
        flags.append(f)
    return loss, g_out, g_hidden, flags
