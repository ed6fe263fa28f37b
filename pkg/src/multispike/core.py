"""Closed-form LIF dynamics in the transformed time domain ``z = exp(t / tau_i)``.

With leaky factor ``p = tau_i / tau_v = 2`` the membrane potential between two
events is ``V(z) = a / z - b / z**2`` and the next threshold crossing is the
smaller root of a quadratic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: grazing tangencies (disc slightly negative from rounding) still count as a spike
DISC_CLAMP = 1e-12


@dataclass(frozen=True)
class NeuronParams:
    tau_i: float = 0.8
    tau_v: float | None = None
    v_th: float = 1.0
    beta_i: float = 1.0
    beta_v: float = 1.0

    def __post_init__(self):
        if self.tau_v is None:
            object.__setattr__(self, "tau_v", self.tau_i / 2.0)
        if not (self.tau_i > 0 and self.tau_v > 0):
            raise ValueError("time constants must be positive")
        if self.tau_i == self.tau_v:
            raise ValueError("tau_i and tau_v must differ")
        if self.p != 2.0:
            raise ValueError(f"only leaky factor p = 2 is supported, got p = {self.p!r}")
        if not self.v_th > 0:
            raise ValueError("v_th must be positive")

    @property
    def p(self) -> float:
        return self.tau_i / self.tau_v

    @property
    def scale(self) -> float:
        """Potential prefactor ``beta_i * beta_v * tau_i * tau_v / (tau_i - tau_v)``.

        Equals ``tau_i`` for unit betas at ``p = 2``.
        """
        return self.beta_i * self.beta_v * self.tau_i * self.tau_v / (self.tau_i - self.tau_v)


@dataclass(frozen=True)
class SpikeEvent:
    z: float
    source: int
    local_index: int


@dataclass(frozen=True)
class CoefficientPair:
    a_tilde: float = 0.0
    b_tilde: float = 0.0


@dataclass
class SpikeTrain:
    """Spike events in global order (ascending ``z``, ties by source index).

    Stored as parallel arrays; ``n_neurons`` is the size of the emitting layer.
    """

    z: np.ndarray
    source: np.ndarray
    local_index: np.ndarray = None
    n_neurons: int = None
    counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.z = np.ascontiguousarray(self.z, dtype=np.float64).reshape(-1)
        self.source = np.ascontiguousarray(self.source, dtype=np.int64).reshape(-1)
        if self.z.shape != self.source.shape:
            raise ValueError("z and source must have equal length")
        if self.n_neurons is None:
            self.n_neurons = int(self.source.max()) + 1 if self.source.size else 0
        if self.z.size:
            if not np.all(np.isfinite(self.z)) or self.z.min() < 1.0:
                raise ValueError("spike z-values must be finite and >= 1")
            if self.source.min() < 0 or self.source.max() >= self.n_neurons:
                raise ValueError("source index out of range")
            dz = np.diff(self.z)
            if np.any(dz < 0) or np.any((dz == 0) & (np.diff(self.source) < 0)):
                raise ValueError("events must be sorted by (z, source)")
        self.counts = np.bincount(self.source, minlength=self.n_neurons).astype(np.int64)
        if self.local_index is None:
            order = np.argsort(self.source, kind="stable")
            starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]])
            local = np.empty_like(self.source)
            local[order] = np.arange(self.source.size) - np.repeat(starts, self.counts)
            self.local_index = local
        else:
            self.local_index = np.ascontiguousarray(self.local_index, dtype=np.int64).reshape(-1)

    @classmethod
    def empty(cls, n_neurons: int) -> "SpikeTrain":
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), n_neurons)

    @classmethod
    def from_times(cls, times, sources, params: NeuronParams, n_neurons: int | None = None):
        """Build a globally ordered train from unordered ``(t, source)`` pairs."""
        times = np.asarray(times, dtype=np.float64).reshape(-1)
        sources = np.asarray(sources, dtype=np.int64).reshape(-1)
        order = np.lexsort((sources, times))
        return cls(time_to_z(times[order], params), sources[order], n_neurons=n_neurons)

    def __len__(self) -> int:
        return int(self.z.size)

    def __iter__(self):
        for z, s, k in zip(self.z, self.source, self.local_index):
            yield SpikeEvent(float(z), int(s), int(k))

    @property
    def events(self) -> list[SpikeEvent]:
        return list(self)

    def per_neuron(self) -> list[np.ndarray]:
        """Local-order z-values of every neuron."""
        return [self.z[self.source == i] for i in range(self.n_neurons)]

    def times(self, params: NeuronParams) -> np.ndarray:
        return z_to_time(self.z, params)


def time_to_z(t, params: NeuronParams):
    with np.errstate(over="raise"):
        try:
            z = np.exp(np.asarray(t, dtype=np.float64) / params.tau_i)
        except FloatingPointError:
            raise OverflowError("time too large for tau_i; check the time scale") from None
    return float(z) if np.ndim(z) == 0 else z


def z_to_time(z, params: NeuronParams):
    t = params.tau_i * np.log(np.asarray(z, dtype=np.float64))
    return float(t) if np.ndim(t) == 0 else t


def kernel_eval(t, params: NeuronParams):
    """Current kernel ``A``, voltage kernel ``B`` and potential kernel ``K = A - B``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("kernels are causal: t must be >= 0")
    a = np.exp(-t / params.tau_i)
    b = np.exp(-t / params.tau_v)
    if a.ndim == 0:
        return float(a), float(b), float(a - b)
    return a, b, a - b


def accumulate_coefficients(presyn_z, weights, z_prev: float, params: NeuronParams) -> CoefficientPair:
    """Coefficients after the presynaptic prefix ``presyn_z`` given the last own spike ``z_prev``.

    ``weights[m]`` is the synaptic weight carried by event ``m``. ``z_prev = 0``
    means the neuron has not fired yet.
    """
    z = np.asarray(presyn_z, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if z.size == 0:
        return CoefficientPair(0.0, 0.0)
    s = params.scale
    return CoefficientPair(
        float(s * np.sum(w * z)),
        float(s * np.sum(w * z * np.maximum(z_prev, z))),
    )


class CoefficientAccumulator:
    """Event-by-event version of :func:`accumulate_coefficients` (O(1) per event)."""

    def __init__(self, params: NeuronParams):
        self.scale = params.scale
        self.a_tilde = 0.0
        self.b_tilde = 0.0
        self.z_prev = 0.0

    def add(self, z: float, w: float) -> None:
        self.a_tilde += self.scale * w * z
        self.b_tilde += self.scale * w * z * max(self.z_prev, z)

    def reset(self, z_spike: float) -> None:
        # every accumulated input precedes the spike, so each max() selects z_spike
        self.z_prev = z_spike
        self.b_tilde = z_spike * self.a_tilde

    @property
    def coeffs(self) -> CoefficientPair:
        return CoefficientPair(self.a_tilde, self.b_tilde)


def membrane_potential_at(z, coeffs: CoefficientPair):
    z = np.asarray(z, dtype=np.float64)
    v = coeffs.a_tilde / z - coeffs.b_tilde / (z * z)
    return float(v) if v.ndim == 0 else v


def solve_next_spike(coeffs: CoefficientPair, v_th: float, window) -> float | None:
    """First upward threshold crossing inside the half-open ``window``, or ``None``."""
    z_lo, z_hi = window
    return _solve(coeffs.a_tilde, coeffs.b_tilde, v_th, z_lo, z_hi)


def _solve(a: float, b: float, v_th: float, z_lo: float, z_hi: float) -> float | None:
    if a < 0.0 or b < 0.0:
        return None
    disc = a * a - 4.0 * v_th * b
    if disc < 0.0:
        if disc < -DISC_CLAMP:
            return None
        disc = 0.0
    denom = a + math.sqrt(disc)
    if denom <= 0.0:
        return None
    # 2b / (a + sqrt(disc)) is the smaller root without cancellation
    z = 2.0 * b / denom
    if z_lo <= z < z_hi:
        return z
    return None
