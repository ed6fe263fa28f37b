"""Adam updates, weight initialisation and the mini-batch training loop."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backward import GradientSet, backward, forward_with_tape
from .core import NeuronParams
from .data import latency_encode
from .forward import EngineConfig, network_forward
from .loss import LossConfig, batch_loss

#: per-sample gradients are summed inside fixed-size chunks, then chunk by chunk,
#: so the reduction order never depends on the number of workers
REDUCTION_CHUNK = 25


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    shapes: list[tuple[int, ...]]
    lr: float = 1e-3
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = None
    v: list[np.ndarray] = None

    def __post_init__(self):
        if self.m is None:
            self.m = [np.zeros(s) for s in self.shapes]
        if self.v is None:
            self.v = [np.zeros(s) for s in self.shapes]


def adam_step(state: AdamState, weights: list[np.ndarray], grads) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam; ``weights`` and the moments are updated in place."""
    grads = list(grads)
    if len(grads) != len(weights):
        raise ValueError("one gradient per weight matrix required")
    for li, g in enumerate(grads):
        if g.shape != weights[li].shape:
            raise ValueError(f"gradient {li} has shape {g.shape}, weights {weights[li].shape}")
        bad = np.argwhere(~np.isfinite(g))
        if bad.size:
            raise NonFiniteGradientError(f"non-finite gradient in layer {li} at {tuple(int(i) for i in bad[0])}")
    state.step += 1
    bc1 = 1.0 - state.b1 ** state.step
    bc2 = 1.0 - state.b2 ** state.step
    for w, g, m, v in zip(weights, grads, state.m, state.v):
        m *= state.b1
        m += (1.0 - state.b1) * g
        v *= state.b2
        v += (1.0 - state.b2) * (g * g)
        w -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return weights, state


def init_weights(shape, seed=None, mean: float = 0.03, spread: float = 0.3,
                 reading: str = "std") -> np.ndarray:
    """Gaussian weights.

    ``reading="std"`` uses ``spread`` as the standard deviation,
    ``reading="variance"`` as the variance.
    """
    if reading not in ("std", "variance"):
        raise ValueError("reading must be 'std' or 'variance'")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    std = spread if reading == "std" else np.sqrt(spread)
    return rng.normal(mean, std, size=shape)


@dataclass
class SpikingModel:
    """Trainable state: weights, neuron/engine settings, optimizer and shuffle RNG."""

    weights: list[np.ndarray]
    params: NeuronParams
    engine: EngineConfig
    adam: AdamState
    rng: np.random.Generator
    t_min: float = 0.0
    t_max: float = 1.0
    epoch: int = 0

    @classmethod
    def create(cls, sizes, params: NeuronParams, engine: EngineConfig, seed: int = 0,
               lr: float = 1e-3, init_mean: float = 0.03, init_spread: float = 0.3,
               init_reading: str = "std", t_min: float = 0.0, t_max: float = 1.0) -> "SpikingModel":
        rng = np.random.default_rng(seed)
        weights = [init_weights((a, b), rng, init_mean, init_spread, init_reading)
                   for a, b in zip(sizes[:-1], sizes[1:])]
        adam = AdamState([w.shape for w in weights], lr=lr)
        return cls(weights, params, engine, adam, rng, t_min, t_max)

    def encode(self, image):
        return latency_encode(image, self.params, self.t_min, self.t_max)


@dataclass
class EpochMetrics:
    loss: float
    accuracy: float
    mean_spikes: float        # per hidden neuron per sample
    dead_fraction: float      # mean fraction of flagged hidden neurons per batch
    truncated: int            # neuron-sample pairs stopped by the n2 cap
    tangency_clips: int
    n_samples: int
    spike_counts: list = field(default=None, repr=False)


def _forward_batch(model: SpikingModel, images, pool, tape: bool):
    def run(image):
        train = model.encode(image)
        if tape:
            return forward_with_tape(train, model.weights, model.params, model.engine)
        return network_forward(train, model.weights, model.params, model.engine), None

    if pool is None:
        return [run(x) for x in images]
    return list(pool.map(run, images))


def _reduce(model, tapes, g_out, g_hidden, pool):
    n = len(tapes)

    def chunk(lo):
        acc = GradientSet([np.zeros_like(w) for w in model.weights])
        for b in range(lo, min(lo + REDUCTION_CHUNK, n)):
            backward(tapes[b], g_out[b], [g[b] for g in g_hidden], out=acc)
        return acc

    starts = range(0, n, REDUCTION_CHUNK)
    parts = [chunk(s) for s in starts] if pool is None else list(pool.map(chunk, starts))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def train_epoch(model: SpikingModel, images, labels, batch_size: int = 100,
                loss_config: LossConfig = LossConfig(), n_jobs: int = 1, on_tape=None) -> EpochMetrics:
    """One pass over the data in a freshly shuffled order.

    ``on_tape`` is called with every sample's tape (e.g. for invariant checks).
    """
    n = len(labels)
    if n == 0:
        raise ValueError("empty dataset")
    order = model.rng.permutation(n)
    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    loss_sum = correct = spikes = truncated = clips = 0
    dead = []
    n_hidden_neurons = sum(w.shape[1] for w in model.weights[:-1])
    try:
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            results = _forward_batch(model, images[idx], pool, tape=True)
            outs = [r[0] for r in results]
            tapes = [r[1] for r in results]
            if on_tape is not None:
                for t in tapes:
                    on_tape(t)
            v_out = np.stack([o.v_out for o in outs])
            v_hidden = [np.stack([o.v_hidden[l] for o in outs]) for l in range(len(model.weights) - 1)]
            counts = [np.stack([o.spike_counts[l] for o in outs]) for l in range(len(model.weights) - 1)]
            loss, g_out, g_hidden, flags = batch_loss(v_out, v_hidden, labels[idx], counts,
                                                      loss_config, model.params.v_th)
            grads = _reduce(model, tapes, g_out, g_hidden, pool)
            adam_step(model.adam, model.weights, grads.grads)

            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(v_out, axis=1) == labels[idx]))
            spikes += sum(int(c.sum()) for c in counts)
            truncated += sum(int(np.sum([h.truncated for h in o.hidden])) for o in outs)
            clips += grads.tangency_clips
            if flags:
                dead.append(float(np.mean(np.concatenate(flags))))
    finally:
        if pool is not None:
            pool.shutdown()
    model.epoch += 1
    return EpochMetrics(
        loss=loss_sum / n,
        accuracy=correct / n,
        mean_spikes=spikes / (n * n_hidden_neurons) if n_hidden_neurons else 0.0,
        dead_fraction=float(np.mean(dead)) if dead else 0.0,
        truncated=truncated,
        tangency_clips=clips,
        n_samples=n,
    )


@dataclass
class EvalResult:
    accuracy: float
    v_out: np.ndarray
    spike_counts: list[np.ndarray]   # per hidden layer, (N, J)
    truncated: int

    @property
    def mean_spikes(self) -> float:
        total = sum(int(c.sum()) for c in self.spike_counts)
        cells = sum(c.size for c in self.spike_counts)
        return total / cells if cells else 0.0


def evaluate(model: SpikingModel, images, labels=None, n_jobs: int = 1, batch_size: int = 500) -> EvalResult:
    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    v_out, counts, truncated = [], [], 0
    try:
        for start in range(0, len(images), batch_size):
            for out, _ in _forward_batch(model, images[start:start + batch_size], pool, tape=False):
                v_out.append(out.v_out)
                counts.append([c.copy() for c in out.spike_counts])
                truncated += int(sum(h.truncated.sum() for h in out.hidden))
    finally:
        if pool is not None:
            pool.shutdown()
    v_out = np.array(v_out).reshape(len(images), -1)
    n_hidden = len(model.weights) - 1
    per_layer = [np.array([c[l] for c in counts]).reshape(len(images), -1) for l in range(n_hidden)]
    acc = float(np.mean(np.argmax(v_out, axis=1) == np.asarray(labels))) if labels is not None else float("nan")
    return EvalResult(acc, v_out, per_layer, truncated)
