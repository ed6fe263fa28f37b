"""Exact reverse-mode gradients through spike times, reset paths and the global merge."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .core import CoefficientPair, NeuronParams, SpikeTrain
from .forward import (EngineConfig, LayerOutput, LayerSpec, NetworkOutput, check_chain,
                      layer_forward, output_potentials, readout_phi, scan_layer)

#: below this discriminant the spike-time derivative diverges and is clipped to zero
TANGENCY_TOL = 1e-12


class TapeMismatchError(RuntimeError):
    pass


class SpikePartials(NamedTuple):
    d_a: float
    d_b: float
    clipped: bool


def spike_time_partials(coeffs: CoefficientPair, z_star: float, v_th: float = 1.0) -> SpikePartials:
    """Derivatives of the crossing ``z*`` with respect to both coefficients."""
    a, b = coeffs.a_tilde, coeffs.b_tilde
    disc = a * a - 4.0 * v_th * b
    if disc < TANGENCY_TOL:
        return SpikePartials(0.0, 0.0, True)
    root = math.sqrt(disc)
    return SpikePartials((1.0 - a / root) / (2.0 * v_th), 1.0 / root, False)


@dataclass
class GradientSet:
    grads: list[np.ndarray]
    tangency_clips: int = 0

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([a + b for a, b in zip(self.grads, other.grads)],
                           self.tangency_clips + other.tangency_clips)

    def scaled(self, c: float) -> "GradientSet":
        return GradientSet([c * g for g in self.grads], self.tangency_clips)

    def __iter__(self):
        return iter(self.grads)

    def __getitem__(self, i):
        return self.grads[i]

    def __len__(self):
        return len(self.grads)


def _checksum(arrays) -> int:
    crc = 0
    for a in arrays:
        crc = zlib.crc32(np.ascontiguousarray(a).tobytes(), crc)
    return crc


@dataclass
class GradientTape:
    """Recorded forward computation of one sample.

    Per hidden layer the :class:`~multispike.forward.LayerRecord` holds, for
    every spike, the interval it was found in and the coefficient pair that
    produced it; the previous-spike (reset) link is the preceding local index.
    The merged :class:`SpikeTrain` of each layer maps global order back to
    ``(source, local_index)``.
    """

    params: NeuronParams
    config: EngineConfig
    inputs: SpikeTrain
    weights: list[np.ndarray]
    hidden: list[LayerOutput]
    v_out: np.ndarray
    checksum: int = field(default=0, repr=False)

    def _fingerprint(self) -> int:
        arrays = [self.v_out]
        for h in self.hidden:
            r = h.record
            arrays += [r.zg, r.spk_z, r.spk_g, r.spk_a, r.spk_b, r.count, h.spikes.z, h.spikes.source]
        # the first layer is differentiated through its grouped copy; the rest are read directly
        arrays += self.weights[1:]
        return _checksum(arrays)

    def seal(self) -> "GradientTape":
        self.checksum = self._fingerprint()
        return self

    def verify(self):
        if self._fingerprint() != self.checksum:
            raise TapeMismatchError("tape no longer matches the values it recorded")

    def replay(self) -> list[np.ndarray]:
        """Recompute every layer's spike record from the tape alone."""
        return [scan_layer(h.record.zg, h.record.wg, self.params, self.config)["spk_z"]
                for h in self.hidden]

    @property
    def n_spikes(self) -> int:
        return sum(len(h.spikes) for h in self.hidden)


def forward_with_tape(inputs: SpikeTrain, layers, params: NeuronParams, config: EngineConfig):
    weights = [l.weights if isinstance(l, LayerSpec) else np.ascontiguousarray(l, dtype=np.float64)
               for l in layers]
    specs = [LayerSpec(w) for w in weights]
    check_chain(specs, inputs.n_neurons)
    hidden = []
    train = inputs
    for spec in specs[:-1]:
        out = layer_forward(train, spec, params, config)
        hidden.append(out)
        train = out.spikes
    v_out = output_potentials(train, specs[-1], params, config)
    tape = GradientTape(params, config, inputs, [s.weights for s in specs], hidden, v_out).seal()
    return NetworkOutput(v_out, hidden), tape


def backward(tape: GradientTape, g_v_out, g_v_hidden=None, *, out: GradientSet | None = None,
             fault: str | None = None) -> GradientSet:
    """Weight gradients of a scalar loss given its gradients w.r.t. the potentials.

    ``g_v_hidden`` is a list with one array per hidden layer (or ``None``).
    With ``out`` given, gradients are added into it in place and it is returned.
    ``fault`` deliberately corrupts the result for checker self-tests:
    ``"flip_db"`` negates dz*/db, ``"drop_reset"`` cuts the reset paths.
    """
    if fault not in (None, "flip_db", "drop_reset"):
        raise ValueError(f"unknown fault {fault!r}")
    b_sign = -1.0 if fault == "flip_db" else 1.0
    reset_gain = 0.0 if fault == "drop_reset" else 1.0
    tape.verify()
    params, config = tape.params, tape.config
    z_out = config.z_out
    scale = params.scale
    g_v_out = np.asarray(g_v_out, dtype=np.float64)
    n_hidden = len(tape.hidden)
    if g_v_hidden is None:
        g_v_hidden = [None] * n_hidden
    if len(g_v_hidden) != n_hidden:
        raise ValueError("need one hidden-potential gradient per hidden layer")

    if out is None:
        out = GradientSet([np.zeros_like(w) for w in tape.weights])
    grads = out.grads
    w_out = tape.weights[-1]
    train = tape.hidden[-1].spikes if n_hidden else tape.inputs
    grads[-1] += scale * np.outer(readout_phi(train, z_out), g_v_out)
    # dv/dz of each read-out spike: scale * w * (1/z_out - 2 z / z_out^2)
    g_z = scale * (1.0 / z_out - 2.0 * train.z / (z_out * z_out)) * (w_out[train.source] @ g_v_out)

    clips = 0
    for layer in range(n_hidden - 1, -1, -1):
        layer_out = tape.hidden[layer]
        rec = layer_out.record
        spikes = layer_out.spikes
        n_post = rec.count.size
        gz_ext = np.zeros_like(rec.spk_z)
        gz_ext[spikes.source, spikes.local_index] = g_z
        g_vend = np.zeros(n_post) if g_v_hidden[layer] is None else np.asarray(g_v_hidden[layer], np.float64)
        n_groups = rec.zg.size
        gw_group = np.zeros((n_groups, n_post))
        zcoef = np.zeros((n_groups, n_post))
        clips += _kernels.layer_backward(rec.zg, rec.wg, scale, params.v_th, z_out, TANGENCY_TOL,
                                         rec.spk_z, rec.spk_g, rec.spk_a, rec.spk_b, rec.count,
                                         gz_ext, g_vend, gw_group, zcoef, b_sign, reset_gain)
        presyn = tape.inputs if layer == 0 else tape.hidden[layer - 1].spikes
        src = presyn.source[rec.kept]
        if presyn.counts.max(initial=0) <= 1:
            grads[layer][src] += gw_group[rec.event_group]
        else:
            np.add.at(grads[layer], src, gw_group[rec.event_group])
        if layer > 0:
            # gradient w.r.t. each presynaptic spike time, routed back to local order
            g_kept = np.einsum("ij,ij->i", zcoef[rec.event_group], tape.weights[layer][src])
            g_z = np.zeros(len(presyn))
            g_z[rec.kept] = g_kept
    out.tangency_clips += clips
    return out
