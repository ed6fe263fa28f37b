"""Event-driven forward pass through fully connected multi-spike LIF layers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import DISC_CLAMP, CoefficientPair, NeuronParams, SpikeTrain, time_to_z


@dataclass
class LayerSpec:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a 2-D (n_pre, n_post) matrix")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def n_pre(self) -> int:
        return self.weights.shape[0]

    @property
    def n_post(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class EngineConfig:
    """Spike caps and readout point.

    ``n1`` bounds the first stage, ``n2`` the total spikes per neuron.
    """

    z_out: float
    n1: int = 3
    n2: int = 16
    single_spike: bool = False

    def __post_init__(self):
        if not 1 <= self.n1 <= self.n2:
            raise ValueError("need 1 <= n1 <= n2")
        if not self.z_out > 1.0:
            raise ValueError("z_out must exceed 1 (t_out > 0)")

    @classmethod
    def from_time(cls, t_out: float, params: NeuronParams, **kwargs) -> "EngineConfig":
        return cls(z_out=time_to_z(t_out, params), **kwargs)

    @property
    def caps(self) -> tuple[int, int]:
        if self.single_spike:
            return 1, 1
        return self.n1, self.n2


@dataclass
class LayerOutput:
    spikes: SpikeTrain
    potentials_at_end: np.ndarray
    truncated: np.ndarray
    # kernel-level record used by the backward pass
    record: "LayerRecord" = field(default=None, repr=False)


@dataclass
class NetworkOutput:
    v_out: np.ndarray
    hidden: list[LayerOutput]

    @property
    def v_hidden(self) -> list[np.ndarray]:
        return [h.potentials_at_end for h in self.hidden]

    @property
    def spike_counts(self) -> list[np.ndarray]:
        return [h.spikes.counts for h in self.hidden]


@dataclass
class LayerRecord:
    """Everything the reverse sweep needs about one layer's forward computation."""

    zg: np.ndarray          # distinct presynaptic z-values below z_out
    wg: np.ndarray          # grouped weights, shape (n_groups, n_post)
    event_group: np.ndarray  # group of each kept presynaptic event
    kept: np.ndarray        # indices of kept presynaptic events
    spk_z: np.ndarray
    spk_g: np.ndarray
    spk_a: np.ndarray
    spk_b: np.ndarray
    count: np.ndarray
    acc_a: np.ndarray
    acc_b: np.ndarray
    z_prev: np.ndarray

    def final_coeffs(self, j: int) -> CoefficientPair:
        return CoefficientPair(float(self.acc_a[j]), float(self.acc_b[j]))


def group_events(presyn: SpikeTrain, weights: np.ndarray, z_out: float):
    """Collapse simultaneous presynaptic events and drop those at or after ``z_out``.

    Events at ``z_out`` contribute exactly zero to the readout and later ones
    are not yet causal there, so neither affects any result.
    """
    kept = np.flatnonzero(presyn.z < z_out)
    z = presyn.z[kept]
    n_post = weights.shape[1]
    if z.size == 0:
        return np.zeros(0), np.zeros((0, n_post)), np.zeros(0, dtype=np.int64), kept
    new = np.empty(z.size, dtype=bool)
    new[0] = True
    np.not_equal(z[1:], z[:-1], out=new[1:])
    starts = np.flatnonzero(new)
    rows = weights[presyn.source[kept]]
    wg = np.add.reduceat(rows, starts, axis=0) if starts.size < z.size else rows
    return z[starts], np.ascontiguousarray(wg), np.cumsum(new) - 1, kept


def scan_layer(zg, wg, params: NeuronParams, config: EngineConfig, stages: bool = True):
    """Run the compiled event loop (two-stage by default) and return its state arrays."""
    n_post = wg.shape[1]
    n1, n2 = config.caps
    g_pos = np.full(n_post, -1, dtype=np.int64)
    acc_a = np.zeros(n_post)
    acc_b = np.zeros(n_post)
    z_prev = np.zeros(n_post)
    count = np.zeros(n_post, dtype=np.int64)
    paused = np.zeros(n_post, dtype=bool)
    spk_z = np.zeros((n_post, n2))
    spk_g = np.zeros((n_post, n2), dtype=np.int64)
    spk_a = np.zeros((n_post, n2))
    spk_b = np.zeros((n_post, n2))
    trunc = np.zeros(n_post, dtype=bool)
    probe = not config.single_spike
    args = (g_pos, acc_a, acc_b, z_prev, count, paused, spk_z, spk_g, spk_a, spk_b, trunc)
    common = (zg, wg, params.scale, params.v_th, config.z_out, DISC_CLAMP)
    if stages and n1 < n2:
        _kernels.layer_scan(*common, n1, False, probe, np.ones(n_post, dtype=bool), *args)
        # only neurons that reached the stage-1 cap can fire again
        _kernels.layer_scan(*common, n2, True, probe, paused.copy(), *args)
    else:
        _kernels.layer_scan(*common, n2, True, probe, np.ones(n_post, dtype=bool), *args)
    return dict(g_pos=g_pos, acc_a=acc_a, acc_b=acc_b, z_prev=z_prev, count=count,
                spk_z=spk_z, spk_g=spk_g, spk_a=spk_a, spk_b=spk_b, trunc=trunc)


def merge_global(per_neuron) -> SpikeTrain:
    """Merge per-neuron ascending spike lists into one train; ties go to the lower index."""
    lists = [np.asarray(s, dtype=np.float64).reshape(-1) for s in per_neuron]
    n = len(lists)
    if n == 0:
        return SpikeTrain.empty(0)
    for s in lists:
        if np.any(np.diff(s) < 0):
            raise ValueError("per-neuron spike lists must be ascending")
    counts = np.array([s.size for s in lists], dtype=np.int64)
    z = np.concatenate(lists) if counts.sum() else np.zeros(0)
    src = np.repeat(np.arange(n, dtype=np.int64), counts)
    local = np.concatenate([np.arange(c) for c in counts]) if counts.sum() else np.zeros(0, np.int64)
    order = np.lexsort((src, z))
    return SpikeTrain(z[order], src[order], local[order], n)


def _merge_record(spk_z, count) -> SpikeTrain:
    n_post, width = spk_z.shape
    mask = np.arange(width)[None, :] < count[:, None]
    src, local = np.nonzero(mask)
    z = spk_z[src, local]
    order = np.lexsort((src, z))
    return SpikeTrain(z[order], src[order], local[order], n_post)


def layer_forward(presyn: SpikeTrain, layer: LayerSpec, params: NeuronParams,
                  config: EngineConfig, stages: bool = True) -> LayerOutput:
    if presyn.n_neurons != layer.n_pre:
        raise ValueError(f"layer expects {layer.n_pre} inputs, train has {presyn.n_neurons} neurons")
    zg, wg, event_group, kept = group_events(presyn, layer.weights, config.z_out)
    st = scan_layer(zg, wg, params, config, stages=stages)
    z_out = config.z_out
    v_end = st["acc_a"] / z_out - st["acc_b"] / (z_out * z_out)
    record = LayerRecord(zg, wg, event_group, kept, st["spk_z"], st["spk_g"], st["spk_a"],
                         st["spk_b"], st["count"], st["acc_a"], st["acc_b"], st["z_prev"])
    return LayerOutput(_merge_record(st["spk_z"], st["count"]), v_end, st["trunc"], record)


def neuron_forward(presyn: SpikeTrain, weights_column, params: NeuronParams, config: EngineConfig):
    """Spike list and final coefficients of a single postsynaptic neuron."""
    w = np.asarray(weights_column, dtype=np.float64).reshape(-1, 1)
    out = layer_forward(presyn, LayerSpec(w), params, config)
    return out.spikes.z.copy(), out.record.final_coeffs(0)


def readout_phi(hidden: SpikeTrain, z_out: float) -> np.ndarray:
    """Per-neuron sum of ``z/z_out - z**2/z_out**2`` over its spikes."""
    z = hidden.z
    per_spike = z / z_out - (z * z) / (z_out * z_out)
    return np.bincount(hidden.source, weights=per_spike, minlength=hidden.n_neurons)


def output_potentials(hidden: SpikeTrain, out_layer: LayerSpec, params: NeuronParams,
                      config: EngineConfig) -> np.ndarray:
    """Potentials of the non-firing output neurons at ``z_out``."""
    if hidden.n_neurons != out_layer.n_pre:
        raise ValueError("output layer size does not match hidden layer")
    if len(hidden) and hidden.z.max() > config.z_out:
        raise ValueError("hidden spikes after z_out cannot be read out")
    return params.scale * readout_phi(hidden, config.z_out) @ out_layer.weights


def check_chain(layers, n_inputs: int):
    if len(layers) < 1:
        raise ValueError("need at least an output layer")
    n = n_inputs
    for i, layer in enumerate(layers):
        if layer.n_pre != n:
            raise ValueError(f"layer {i} expects {layer.n_pre} inputs but receives {n}")
        n = layer.n_post


def network_forward(inputs: SpikeTrain, layers, params: NeuronParams, config: EngineConfig) -> NetworkOutput:
    """Hidden layers in sequence, then the output readout. ``layers[-1]`` is the output layer."""
    layers = [l if isinstance(l, LayerSpec) else LayerSpec(l) for l in layers]
    check_chain(layers, inputs.n_neurons)
    hidden = []
    train = inputs
    for layer in layers[:-1]:
        out = layer_forward(train, layer, params, config)
        hidden.append(out)
        train = out.spikes
    v_out = output_potentials(train, layers[-1], params, config)
    return NetworkOutput(v_out, hidden)
