import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multispike.backward import (TapeMismatchError, backward, forward_with_tape,
                                 spike_time_partials)
from multispike.checks import analytic_grad, gradcheck, random_tiny_case
from multispike.core import CoefficientPair, NeuronParams, SpikeTrain, solve_next_spike
from multispike.forward import EngineConfig, network_forward
from multispike.loss import LossConfig
from multispike.oracle import finite_diff_grad

from conftest import single_input

P1 = NeuronParams(tau_i=1.0)
E1 = EngineConfig.from_time(1.0, P1)


def chain_net(w_hidden, w_out=1.0):
    return [np.array([[w_hidden]]), np.array([[w_out]])]


def fd_scalar(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestPartials:
    def test_example(self):
        d = spike_time_partials(CoefficientPair(5.0, 5.0), (5 - math.sqrt(5)) / 2, 1.0)
        assert d.d_a == pytest.approx((1 - math.sqrt(5)) / 2, rel=1e-12)
        assert d.d_b == pytest.approx(1 / math.sqrt(5), rel=1e-12)
        assert d.d_a == pytest.approx(-0.61803, abs=1e-5) and d.d_b == pytest.approx(0.44721, abs=1e-5)

    def test_example_against_solver_fd(self):
        d = spike_time_partials(CoefficientPair(5.0, 5.0), None, 1.0)
        solve = lambda a, b: solve_next_spike(CoefficientPair(a, b), 1.0, (0.5, math.inf))
        assert d.d_a == pytest.approx(fd_scalar(lambda a: solve(a, 5.0), 5.0), rel=1e-6)
        assert d.d_b == pytest.approx(fd_scalar(lambda b: solve(5.0, b), 5.0), rel=1e-6)

    def test_b_zero_limit(self):
        d = spike_time_partials(CoefficientPair(3.0, 0.0), 0.0, 1.0)
        assert d.d_a == 0.0 and d.d_b == pytest.approx(1 / 3)

    def test_tangency_clipped(self):
        d = spike_time_partials(CoefficientPair(4.0, 4.0), 2.0, 1.0)
        assert d.clipped and d.d_a == 0.0 and d.d_b == 0.0

    @given(st.floats(0.5, 20.0), st.floats(0.01, 0.99))
    def test_signs(self, a, frac):
        d = spike_time_partials(CoefficientPair(a, frac * a * a / 4), None, 1.0)
        assert d.d_a <= 0.0 <= d.d_b


class TestTape:
    def test_outputs_identical_to_forward(self):
        for seed in range(5):
            case = random_tiny_case(seed)
            plain = network_forward(case.inputs, case.weights, case.params, case.config)
            out, _ = forward_with_tape(case.inputs, case.weights, case.params, case.config)
            assert np.array_equal(plain.v_out, out.v_out)
            assert np.array_equal(plain.hidden[0].spikes.z, out.hidden[0].spikes.z)

    def test_zero_weight_net_has_empty_tape(self):
        _, tape = forward_with_tape(single_input(0.2, P1), [np.zeros((1, 3)), np.zeros((3, 2))], P1, E1)
        assert tape.n_spikes == 0

    def test_replay_bit_exact(self):
        for seed in range(5):
            case = random_tiny_case(seed)
            out, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
            for rec_z, layer in zip(tape.replay(), out.hidden):
                assert np.array_equal(rec_z, layer.record.spk_z)

    def test_mismatch_detected(self):
        case = random_tiny_case(2)
        _, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
        tape.weights[1][0, 0] += 1.0
        with pytest.raises(TapeMismatchError):
            backward(tape, np.ones(case.weights[1].shape[1]))


class TestBackward:
    def test_zero_upstream(self):
        case = random_tiny_case(4)
        _, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
        g = backward(tape, np.zeros(case.weights[1].shape[1]), [np.zeros(case.weights[0].shape[1])])
        assert all(not np.any(x) for x in g)

    def test_single_spike_chain_rule(self):
        # dz*/dw for one input at t=0 and w=5 is -0.17082 by hand
        net = chain_net(5.0, w_out=1.0)
        _, tape = forward_with_tape(single_input(0.0, P1), net, P1, E1)
        g = backward(tape, np.array([1.0]))
        z = (5 - math.sqrt(5)) / 2
        zo = E1.z_out
        dz_dw = 0.5 * (1 - (2 * 5 - 4) / (2 * math.sqrt(5 * 5 - 4 * 5)))
        assert dz_dw == pytest.approx(-0.17082, abs=1e-5)
        expected = P1.scale * 1.0 * (1 / zo - 2 * z / zo ** 2) * dz_dw
        assert g[0][0, 0] == pytest.approx(expected, rel=1e-12)

        def v_of(w):
            return network_forward(single_input(0.0, P1), chain_net(w), P1, E1).v_out[0]
        assert g[0][0, 0] == pytest.approx(fd_scalar(v_of, 5.0), rel=1e-6)
        assert dz_dw < 0

    def test_linearity(self):
        case = random_tiny_case(9)
        _, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
        rng = np.random.default_rng(0)
        n_out, n_hid = case.weights[1].shape[1], case.weights[0].shape[1]
        u, v = rng.normal(size=n_out), rng.normal(size=n_out)
        hu, hv = rng.normal(size=n_hid), rng.normal(size=n_hid)
        gu, gv = backward(tape, u, [hu]), backward(tape, v, [hv])
        g = backward(tape, 2 * u - 3 * v, [2 * hu - 3 * hv])
        for a, b, c in zip(g, gu, gv):
            assert a == pytest.approx(2 * b - 3 * c, rel=1e-12, abs=1e-12)

    def test_accumulates_into_out(self):
        case = random_tiny_case(9)
        _, tape = forward_with_tape(case.inputs, case.weights, case.params, case.config)
        g = np.ones(case.weights[1].shape[1])
        once = backward(tape, g)
        twice = backward(tape, g, out=backward(tape, g))
        for a, b in zip(once, twice):
            assert np.allclose(2 * a, b, rtol=1e-14, atol=0)

    def test_tangency_counted(self):
        # w=4 at z=1: disc is exactly zero at the crossing z=2
        _, tape = forward_with_tape(single_input(0.0, P1), chain_net(4.0), P1, E1)
        assert tape.n_spikes == 1
        g = backward(tape, np.array([1.0]))
        assert g.tangency_clips == 1 and g[0][0, 0] == 0.0

    def test_tiny_432_matches_fd(self):
        lc = LossConfig()
        for seed in range(5):
            case = random_tiny_case(100 + seed, max_sizes=(4, 3, 2))
            g = analytic_grad(case, lc)
            fd = finite_diff_grad(case.weights, case.inputs, case.label, case.params, case.config, lc)
            for a, f, ns in zip(g, fd.grads, fd.nonsmooth):
                rel = np.abs(a - f) / np.maximum(np.abs(a), 1e-8)
                assert np.all((rel <= 1e-4) | ns)

    def test_reset_path_is_load_bearing(self):
        # w=6 gives two spikes; the second depends on the first through the reset
        train = single_input(0.0, P1)
        net = chain_net(6.0, w_out=1.0)
        out, tape = forward_with_tape(train, net, P1, E1)
        assert out.spike_counts[0][0] == 2
        good = backward(tape, np.array([1.0]))[0][0, 0]
        cut = backward(tape, np.array([1.0]), fault="drop_reset")[0][0, 0]

        def v_of(w):
            return network_forward(train, chain_net(w), P1, E1).v_out[0]
        fd = fd_scalar(v_of, 6.0)
        assert good == pytest.approx(fd, rel=1e-6)
        assert abs(cut - fd) / abs(fd) > 1e-2

    def test_multi_spike_presynaptic_gradients(self):
        # two hidden layers, so spike-time gradients flow through repeated presynaptic firing
        rng = np.random.default_rng(7)
        ws = [rng.normal(3.0, 2.0, (3, 3)), rng.normal(3.0, 2.0, (3, 2)), rng.normal(0, 1, (2, 2))]
        train = SpikeTrain.from_times(rng.uniform(0, 0.5, 4), np.array([0, 1, 2, 0]), P1, 3)
        out, tape = forward_with_tape(train, ws, P1, E1)
        assert out.spike_counts[0].max() >= 2
        lc = LossConfig()
        from multispike.loss import dead_neuron_flags, total_loss
        flags = [dead_neuron_flags(c[None, :], lc) for c in out.spike_counts]
        _, go, gh = total_loss(out.v_out, out.v_hidden, 1, None, lc, flags=flags)
        g = backward(tape, go, gh)
        fd = finite_diff_grad(ws, train, 1, P1, E1, lc)
        for a, f, ns in zip(g, fd.grads, fd.nonsmooth):
            rel = np.abs(a - f) / np.maximum(np.abs(a), 1e-8)
            assert np.all((rel <= 1e-4) | ns)


class TestGradcheckSuite:
    def test_passes(self):
        r = gradcheck(n_cases=5, seed=1)
        assert r["passed"], r

    @pytest.mark.parametrize("fault", ["flip_db", "drop_reset"])
    def test_faults_fail_loudly(self, fault):
        r = gradcheck(n_cases=5, seed=1, fault=fault)
        assert not r["passed"] and r["unexplained_mismatches"] > 0
