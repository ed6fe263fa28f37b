"""Property suites over randomized tiny networks.

Each suite returns a JSON-serializable report with a top-level ``passed``
flag and per-case diagnostics for anything that failed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backward import backward, forward_with_tape
from .core import NeuronParams, SpikeTrain
from .forward import EngineConfig
from .loss import LossConfig, dead_neuron_flags, total_loss
from .oracle import OdeConfig, finite_diff_grad, ode_simulate

TAUS = (0.5, 0.8, 1.0)
ORACLE_T_TOL = 1e-5
ORACLE_V_TOL = 1e-6
GRAD_RTOL = 1e-4
GRAD_FLOOR = 1e-8
GRAD_MIN_MATCH = 0.95
RESIDUAL_TOL = 1e-9
WEIGHT_LAWS = ("spiky", "init")


@dataclass
class TinyCase:
    seed: int
    params: NeuronParams
    config: EngineConfig
    weights: list[np.ndarray]
    inputs: SpikeTrain
    label: int

    @property
    def sizes(self):
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)


def random_tiny_case(seed: int, max_sizes=(5, 4, 3), t_out: float = 1.0, n1: int = 3,
                     n2: int = 16, single_spike: bool = False, weight_law: str = "spiky") -> TinyCase:
    """A random one-hidden-layer network no larger than ``max_sizes``.

    With ``weight_law="spiky"`` hidden weights are drawn large enough
    (relative to the threshold) that most hidden neurons fire, several of
    them more than once. ``"init"`` draws every weight from N(0.03, 0.3^2),
    the training initialization. Each input neuron fires once or twice
    before ``t_out``.
    """
    if weight_law not in WEIGHT_LAWS:
        raise ValueError(f"weight_law must be one of {WEIGHT_LAWS}")
    rng = np.random.default_rng(seed)
    n_in = int(rng.integers(1, max_sizes[0] + 1))
    n_hid = int(rng.integers(1, max_sizes[1] + 1))
    n_out = int(rng.integers(2, max_sizes[2] + 1))
    tau = float(rng.choice(TAUS))
    params = NeuronParams(tau_i=tau)
    config = EngineConfig.from_time(t_out, params, n1=n1, n2=n2, single_spike=single_spike)
    # one input alone peaks at tau * w / 4, so weights are scaled by 1 / tau
    w_hid = rng.normal(2.0, 3.0, size=(n_in, n_hid)) / tau
    w_out = rng.normal(0.0, 1.0, size=(n_hid, n_out))
    if weight_law == "init":
        w_hid = rng.normal(0.03, 0.3, size=(n_in, n_hid))
        w_out = rng.normal(0.03, 0.3, size=(n_hid, n_out))
    per_input = rng.integers(1, 3, size=n_in)
    src = np.repeat(np.arange(n_in), per_input)
    t = rng.uniform(0.0, 0.9 * t_out, size=src.size)
    inputs = SpikeTrain.from_times(t, src, params, n_in)
    return TinyCase(seed, params, config, [w_hid, w_out], inputs, int(rng.integers(n_out)))


def _case_seeds(n_cases, seed):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_cases)]


def oracle_check(n_cases: int = 100, seed: int = 0, max_step: float = 1e-4,
                 weight_law: str = "spiky") -> dict:
    """Closed-form engine against direct ODE integration."""
    failures = []
    worst_t = worst_v = 0.0
    n_spikes = 0
    for cs in _case_seeds(n_cases, seed):
        case = random_tiny_case(cs, weight_law=weight_law)
        t_out = case.params.tau_i * math.log(case.config.z_out)
        cfg = OdeConfig(max_step=max_step, t_out=t_out, max_spikes=case.config.n2)
        out, _ = forward_with_tape(case.inputs, case.weights, case.params, case.config)
        ref = ode_simulate(case.weights, case.inputs, case.params, cfg)
        problems = []
        for j, ref_times in enumerate(ref.spike_times[0]):
            train = out.hidden[0].spikes
            mine = np.sort(case.params.tau_i * np.log(train.z[train.source == j]))
            n_spikes += len(mine)
            if len(mine) != len(ref_times):
                problems.append(f"neuron {j}: {len(mine)} spikes vs oracle {len(ref_times)}")
                continue
            if len(mine):
                dt = float(np.max(np.abs(mine - np.asarray(ref_times))))
                worst_t = max(worst_t, dt)
                if dt > ORACLE_T_TOL:
                    problems.append(f"neuron {j}: spike time off by {dt:.3g}")
        dv = float(np.max(np.abs(out.v_out - ref.v_out)))
        worst_v = max(worst_v, dv)
        if dv > ORACLE_V_TOL:
            problems.append(f"v_out off by {dv:.3g}")
        if problems:
            failures.append({"case_seed": cs, "sizes": case.sizes, "problems": problems})
    return {"suite": "oracle", "cases": n_cases, "seed": seed, "weight_law": weight_law,
            "hidden_spikes": n_spikes,
            "max_time_error": worst_t, "max_potential_error": worst_v,
            "failures": failures, "passed": not failures}


def analytic_grad(case: TinyCase, loss_config: LossConfig, fault=None):
    out, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
    flags = [dead_neuron_flags(c[None, :], loss_config) for c in out.spike_counts]
    _, g_out, g_hid = total_loss(out.v_out, out.v_hidden, case.label, None, loss_config,
                                 case.params.v_th, flags=flags)
    return backward(tape, g_out, g_hid, fault=fault)


def gradcheck(n_cases: int = 20, seed: int = 0, loss_config: LossConfig = LossConfig(),
              step: float = 1e-6, fault: str | None = None, weight_law: str = "spiky") -> dict:
    """Backward engine against central finite differences of the full loss.

    Passes when at least 95% of all weight coordinates agree within 1e-4
    relative and every disagreeing coordinate sits at a spike-count change.
    """
    total = matched = 0
    unexplained, failures = 0, []
    worst = 0.0
    for cs in _case_seeds(n_cases, seed):
        case = random_tiny_case(cs, weight_law=weight_law)
        grads = analytic_grad(case, loss_config, fault)
        fd = finite_diff_grad(case.weights, case.inputs, case.label, case.params, case.config,
                              loss_config, step)
        bad = []
        for li, (g, f, ns) in enumerate(zip(grads.grads, fd.grads, fd.nonsmooth)):
            rel = np.abs(g - f) / np.maximum(np.abs(g), GRAD_FLOOR)
            ok = rel <= GRAD_RTOL
            total += ok.size
            matched += int(ok.sum())
            if np.any(ok & ~ns):
                worst = max(worst, float(rel[ok & ~ns].max()))
            for idx in zip(*np.nonzero(~ok)):
                entry = {"layer": li, "index": [int(i) for i in idx], "analytic": float(g[idx]),
                         "finite_diff": float(f[idx]), "relative_error": float(rel[idx]),
                         "spike_count_boundary": bool(ns[idx])}
                if not ns[idx]:
                    unexplained += 1
                bad.append(entry)
        if bad:
            failures.append({"case_seed": cs, "sizes": case.sizes, "mismatches": bad})
    fraction = matched / total if total else 1.0
    return {"suite": "gradcheck", "cases": n_cases, "seed": seed, "weight_law": weight_law, "fault": fault,
            "coordinates": total, "matched": matched, "match_fraction": fraction,
            "unexplained_mismatches": unexplained, "max_matched_relative_error": worst,
            "failures": failures,
            "passed": fraction >= GRAD_MIN_MATCH and unexplained == 0}


def root_residuals(tape, tol: float = RESIDUAL_TOL) -> list[dict]:
    """Every recorded spike must sit on the threshold inside its own window."""
    v_th = tape.params.v_th
    z_out = tape.config.z_out
    bad = []
    for li, layer in enumerate(tape.hidden):
        r = layer.record
        n_groups = r.zg.size
        for j in np.nonzero(r.count)[0]:
            for k in range(r.count[j]):
                z, g = r.spk_z[j, k], r.spk_g[j, k]
                a, b = r.spk_a[j, k], r.spk_b[j, k]
                resid = abs(a / z - b / (z * z) - v_th)
                lo = max(r.zg[g], r.spk_z[j, k - 1] if k else 1.0)
                hi = min(r.zg[g + 1] if g + 1 < n_groups else z_out, z_out)
                if resid > tol or not lo <= z < hi:
                    bad.append({"layer": li, "neuron": int(j), "spike": int(k), "z": float(z),
                                "residual": float(resid), "window": [float(lo), float(hi)]})
    return bad


def residual_check(n_cases: int = 100, seed: int = 0, weight_law: str = "spiky") -> dict:
    failures = []
    n_spikes = 0
    for cs in _case_seeds(n_cases, seed):
        case = random_tiny_case(cs, weight_law=weight_law)
        _, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
        n_spikes += tape.n_spikes
        bad = root_residuals(tape)
        if bad:
            failures.append({"case_seed": cs, "violations": bad})
    return {"suite": "root_residual", "cases": n_cases, "seed": seed, "weight_law": weight_law,
            "spikes": n_spikes,
            "failures": failures, "passed": not failures}
