"""Ground truth by brute force.

:func:`ode_simulate` integrates the current/voltage differential equations
directly in real time with fixed-step RK4, impulse current jumps and bisection
event location. It deliberately uses none of the closed-form machinery in
:mod:`multispike.core`. :func:`finite_diff_grad` differentiates the loss by
central differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NeuronParams, SpikeTrain
from .forward import EngineConfig, network_forward
from .loss import LossConfig, dead_neuron_flags, total_loss


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OdeConfig:
    max_step: float = 1e-4
    v_tol: float = 1e-12     # stop bisection once |V - V_th| is this small
    t_tol: float = 1e-10     # ... or once the bracket is this narrow
    t_out: float = 1.0
    min_step: float = 1e-12
    max_spikes: int | None = None   # mirror an engine spike cap; None = unlimited

    def __post_init__(self):
        if not (self.max_step > 0 and self.v_tol > 0 and self.t_tol > 0):
            raise ValueError("step and tolerances must be positive")


@dataclass
class OdeResult:
    spike_times: list[list[list[float]]]   # [hidden layer][neuron] -> times
    v_out: np.ndarray
    v_hidden: list[np.ndarray]


def _rk4(i0, v0, h, tau_i, tau_v, beta_v):
    def f(i, v):
        return -i / tau_i, -v / tau_v + beta_v * i

    k1i, k1v = f(i0, v0)
    k2i, k2v = f(i0 + 0.5 * h * k1i, v0 + 0.5 * h * k1v)
    k3i, k3v = f(i0 + 0.5 * h * k2i, v0 + 0.5 * h * k2v)
    k4i, k4v = f(i0 + h * k3i, v0 + h * k3v)
    return (i0 + h / 6.0 * (k1i + 2 * k2i + 2 * k3i + k4i),
            v0 + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def simulate_neuron(times, weights, params: NeuronParams, cfg: OdeConfig, threshold=math.inf):
    """One postsynaptic neuron driven by presynaptic spikes.

    ``times`` must be ascending. Returns ``(spike_times, V(t_out), I(t_out))``.
    """
    tau_i, tau_v, beta_v, v_th = params.tau_i, params.tau_v, params.beta_v, threshold
    step = cfg.max_step

    def advance(i, v, h):
        # sub-steps of at most max_step keep bisection probes as accurate as the grid
        while h > 0:
            d = min(h, step)
            i, v = _rk4(i, v, d, tau_i, tau_v, beta_v)
            h -= d
        return i, v

    def locate(i, v, t, h):
        lo, hi = 0.0, h
        while True:
            mid = 0.5 * (lo + hi)
            _, vm = advance(i, v, mid)
            if vm >= v_th:
                hi = mid
            else:
                lo = mid
            if hi - lo <= cfg.t_tol or abs(vm - v_th) <= cfg.v_tol:
                break
            if hi - lo < cfg.min_step:
                raise OracleError("bisection failed to bracket the crossing")
        return hi

    def peak_above(i, v, h):
        # dV/dt changes sign inside the step: bisect on its sign, test the apex
        lo, hi = 0.0, h
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            im, vm = advance(i, v, mid)
            if -vm / tau_v + beta_v * im > 0:
                lo = mid
            else:
                hi = mid
        _, vp = advance(i, v, lo)
        return lo if vp >= v_th else None

    t_out = cfg.t_out
    i_cur = v_cur = 0.0
    t = 0.0
    spikes = []
    k = 0
    n = len(times)
    while True:
        while k < n and times[k] <= t:
            i_cur += params.beta_i * weights[k]
            k += 1
        if t >= t_out:
            break
        seg_end = min(times[k], t_out) if k < n else t_out
        while t < seg_end:
            h = min(step, seg_end - t)
            i_new, v_new = _rk4(i_cur, v_cur, h, tau_i, tau_v, beta_v)
            crossing = None
            if cfg.max_spikes is not None and len(spikes) >= cfg.max_spikes:
                crossing = None
            elif v_new >= v_th:
                crossing = h
            elif (-v_cur / tau_v + beta_v * i_cur) > 0 and (-v_new / tau_v + beta_v * i_new) < 0:
                crossing = peak_above(i_cur, v_cur, h)
            if crossing is not None:
                dt = locate(i_cur, v_cur, t, crossing)
                i_cur, _ = advance(i_cur, v_cur, dt)
                t += dt
                spikes.append(t)
                # only the membrane potential resets
                v_cur = 0.0
                continue
            i_cur, v_cur = i_new, v_new
            t = seg_end if h == seg_end - t else t + h
    return spikes, v_cur, i_cur


def _train_times(train: SpikeTrain, params: NeuronParams):
    t = params.tau_i * np.log(train.z)
    return t, train.source


def ode_simulate(weights, inputs: SpikeTrain, params: NeuronParams, cfg: OdeConfig = OdeConfig()) -> OdeResult:
    """Simulate the feed-forward network layer by layer; the last layer never fires."""
    weights = [np.asarray(w, dtype=np.float64) for w in weights]
    t_in, src = _train_times(inputs, params)
    order = np.lexsort((src, t_in))
    t_in, src = t_in[order], src[order]
    spike_times, v_hidden = [], []
    for li, w in enumerate(weights):
        last = li == len(weights) - 1
        threshold = math.inf if last else params.v_th
        layer_spikes, layer_v = [], np.zeros(w.shape[1])
        for j in range(w.shape[1]):
            s, v, _ = simulate_neuron(list(t_in), list(w[src, j]), params, cfg, threshold)
            layer_spikes.append(s)
            layer_v[j] = v
        if last:
            return OdeResult(spike_times, layer_v, v_hidden)
        spike_times.append(layer_spikes)
        v_hidden.append(layer_v)
        t_list = [(tt, j) for j, s in enumerate(layer_spikes) for tt in s]
        t_list.sort()
        t_in = np.array([tt for tt, _ in t_list])
        src = np.array([j for _, j in t_list], dtype=np.int64)
    raise ValueError("no layers given")


@dataclass
class FiniteDiffResult:
    grads: list[np.ndarray]
    nonsmooth: list[np.ndarray]   # True where a spike count differs at w +/- step


def finite_diff_grad(weights, inputs: SpikeTrain, label: int, params: NeuronParams,
                     config: EngineConfig, loss_config: LossConfig = LossConfig(),
                     step: float = 1e-6, coords=None) -> FiniteDiffResult:
    """Central differences of the single-sample loss over every weight.

    Dead-neuron flags are frozen at the unperturbed point, as in training.
    ``coords`` optionally restricts the sweep to ``(layer, index)`` pairs.
    """
    weights = [np.array(w, dtype=np.float64) for w in weights]
    base = network_forward(inputs, weights, params, config)
    flags = [dead_neuron_flags(c[None, :], loss_config) for c in base.spike_counts]

    def evaluate(ws):
        out = network_forward(inputs, ws, params, config)
        loss = total_loss(out.v_out, out.v_hidden, label, None, loss_config, params.v_th, flags=flags)[0]
        return loss, [c.copy() for c in out.spike_counts]

    grads = [np.zeros_like(w) for w in weights]
    nonsmooth = [np.zeros(w.shape, dtype=bool) for w in weights]
    if coords is None:
        coords = [(li, idx) for li, w in enumerate(weights) for idx in np.ndindex(w.shape)]
    for li, idx in coords:
        orig = weights[li][idx]
        weights[li][idx] = orig + step
        lp, cp = evaluate(weights)
        weights[li][idx] = orig - step
        lm, cm = evaluate(weights)
        weights[li][idx] = orig
        grads[li][idx] = (lp - lm) / (2.0 * step)
        nonsmooth[li][idx] = any(not np.array_equal(a, b) for a, b in zip(cp, cm))
    return FiniteDiffResult(grads, nonsmooth)
