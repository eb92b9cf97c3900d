import numpy as np
import pytest

from scsr_snn.backprop import (SurrogateConfig, _context, backward, delta_hidden, delta_output,
                               delta_self_recurrent, delta_skip, error_fields, grad_feedforward,
                               grad_self, grad_skip, layer_case, reverse_scan,
                               surrogate_derivative)
from scsr_snn.gradcheck import check_gradients, make_problem
from scsr_snn.network import NetworkSpec, forward, init_weights

from conftest import scsr_spec

FAST = SurrogateConfig("fast-sigmoid", 10.0)


class TestSurrogate:
    def test_rectangular_at_threshold(self):
        assert surrogate_derivative(1.0, 1.0, SurrogateConfig("rectangular", 1.0)) == 1.0

    @pytest.mark.parametrize("v", [11.0, -9.0])
    def test_rectangular_far(self, v):
        assert surrogate_derivative(v, 1.0, SurrogateConfig("rectangular", 1.0)) == 0.0

    def test_fast_sigmoid_at_threshold(self):
        assert surrogate_derivative(1.0, 1.0, FAST) == 1.0

    def test_smooth_gate_peak(self):
        assert surrogate_derivative(1.0, 1.0, SurrogateConfig("smooth-gate", 4.0)) == 1.0

    def test_param_positive(self):
        with pytest.raises(ValueError):
            SurrogateConfig("fast-sigmoid", 0.0)


def _square_net(n=4, steps=20, recurrent=True, skip=True, seed=0, x_scale=1.0):
    spec = NetworkSpec([n] * 5, [recurrent] * 3, [(1, 3)] if skip else [],
                       input_mode="analog-current")
    w = init_weights(spec, seed)
    x = np.random.default_rng(seed).uniform(0, x_scale, size=(n, steps))
    return spec, w, x


class TestDeltaOutput:
    def test_zero_when_target_matches(self):
        spec, w, x = _square_net()
        tr = forward(spec, w, x)
        assert not delta_output(tr.output.s, tr, spec, w, FAST).any()

    def test_final_step_mismatch(self):
        spec, w, x = _square_net(steps=6)
        tr = forward(spec, w, x)
        d = tr.output.s.copy()
        d[0, -1] = 1.0 - d[0, -1]
        delta = delta_output(d, tr, spec, w, FAST)
        # only neuron 0 is affected; last column is the surrogate times the kernel error
        assert not delta[1:].any()
        sg = surrogate_derivative(tr.output.v[0, -1], 1.0, FAST)
        assert delta[0, -1] == pytest.approx((tr.output.s[0, -1] - d[0, -1]) * sg)
        # one step back: PSC-decayed error plus the leak carry
        ds = tr.output.s[0, -1] - d[0, -1]
        sg0 = surrogate_derivative(tr.output.v[0, -2], 1.0, FAST)
        expected = sg0 * 0.875 * ds + w.theta[4][0] * delta[0, -1] * (1 - tr.output.s[0, -2])
        assert delta[0, -2] == pytest.approx(expected)

    def test_linear_in_error(self):
        spec, w, x = _square_net()
        tr = forward(spec, w, x)
        ctx = _context(spec, w, tr, 4)
        err = np.random.default_rng(1).normal(size=tr.output.v.shape)
        np.testing.assert_allclose(reverse_scan(ctx, FAST, spike_err=3 * err),
                                   3 * reverse_scan(ctx, FAST, spike_err=err), rtol=1e-12)


class TestCase1:
    def test_zero_propagates(self):
        spec, w, x = _square_net(recurrent=False, skip=False)
        tr = forward(spec, w, x)
        assert not delta_hidden(2, np.zeros_like(tr.layers[3].v), w, tr, spec, FAST).any()

    def test_single_step_identity(self):
        spec, w, x = _square_net(steps=1, recurrent=False, skip=False)
        w.W[3] = np.eye(4)
        tr = forward(spec, w, x)
        dn = np.array([[0.3], [-1.0], [2.0], [0.5]])
        delta = delta_hidden(2, dn, w, tr, spec, FAST)
        sg = surrogate_derivative(tr.layers[2].v, 1.0, FAST)
        np.testing.assert_allclose(delta, sg * dn)

    def test_linear_in_weights(self):
        spec, w, x = _square_net(recurrent=False, skip=False)
        tr = forward(spec, w, x)
        dn = np.random.default_rng(0).normal(size=tr.layers[3].v.shape)
        one = delta_hidden(2, dn, w, tr, spec, FAST)
        w2 = w.copy()
        w2.W[3] *= 2
        np.testing.assert_allclose(delta_hidden(2, dn, w2, tr, spec, FAST), 2 * one, rtol=1e-12)


class TestCase2:
    def test_zero_ws_equals_case1(self):
        spec, w, x = _square_net(skip=False)
        for l in w.Ws:
            w.Ws[l][:] = 0
        tr = forward(spec, w, x)
        dn = np.random.default_rng(0).normal(size=tr.layers[3].v.shape)
        assert np.array_equal(delta_self_recurrent(2, dn, w, tr, spec, FAST),
                              delta_hidden(2, dn, w, tr, spec, FAST))

    def test_two_step_self_term(self):
        spec = NetworkSpec([1, 1, 1], [True], input_mode="analog-current")
        w = init_weights(spec, 0)
        w.W[1][:] = 1.0
        w.Ws[1][:] = 0.4
        tr = forward(spec, w, np.array([[0.9, 0.5]]))
        dn = np.array([[0.2, 1.0]])
        rec = delta_self_recurrent(1, dn, w, tr, spec, FAST)
        ff = delta_hidden(1, dn, w, tr, spec, FAST)
        sg0 = surrogate_derivative(tr.layers[1].v[0, 0], 1.0, FAST)
        # the final step has no future, so no self term
        assert rec[0, 1] == ff[0, 1]
        assert rec[0, 0] - ff[0, 0] == pytest.approx(0.4 * sg0 * rec[0, 1], rel=1e-12)


class TestCase3:
    def _setup(self, steps=20):
        spec, w, x = _square_net(steps=steps)
        tr = forward(spec, w, x)
        rng = np.random.default_rng(5)
        dn = rng.normal(size=tr.layers[2].v.shape)
        dskip = rng.normal(size=tr.layers[3].v.shape)
        return spec, w, tr, dn, dskip

    def test_zero_wskip_equals_case2(self):
        spec, w, tr, dn, dskip = self._setup()
        w.Wskip[(1, 3)][:] = 0
        assert np.array_equal(delta_skip(1, dn, {3: dskip}, w, tr, spec, FAST),
                              delta_self_recurrent(1, dn, w, tr, spec, FAST))

    def test_zero_target_delta_equals_case2(self):
        spec, w, tr, dn, dskip = self._setup()
        assert np.array_equal(delta_skip(1, dn, {3: np.zeros_like(dskip)}, w, tr, spec, FAST),
                              delta_self_recurrent(1, dn, w, tr, spec, FAST))

    def test_single_step_identity(self):
        spec, w, tr, dn, dskip = self._setup(steps=1)
        w.W[2] = np.eye(4)
        w.Wskip[(1, 3)] = np.eye(4)
        sg = surrogate_derivative(tr.layers[1].v, 1.0, FAST)
        np.testing.assert_allclose(delta_skip(1, dn, {3: dskip}, w, tr, spec, FAST),
                                   sg * (dn + dskip))


class TestGradients:
    def test_feedforward_examples(self):
        assert grad_feedforward(np.array([[0.5]]), np.array([[1.0]]))[0, 0] == 0.5
        assert not grad_feedforward(np.ones((3, 4)), np.zeros((2, 4))).any()
        a, d = np.random.default_rng(0).normal(size=(2, 3, 7))
        np.testing.assert_allclose(grad_feedforward(2 * a, d), 2 * grad_feedforward(a, d))

    def test_self_examples(self):
        assert grad_self(np.ones((1, 1)), np.ones((1, 1)))[0] == 0.0
        assert grad_self(np.array([[1.0, 0.0]]), np.array([[0.0, 0.3]]))[0] == 0.3
        assert not grad_self(np.zeros((3, 5)), np.ones((3, 5))).any()

    def test_skip_examples(self):
        assert grad_skip(np.array([[0.25]]), np.array([[2.0]]))[0, 0] == 0.5
        assert not grad_skip(np.ones((2, 3)), np.zeros((2, 3))).any()

    def test_batch_sums(self):
        a, d = np.random.default_rng(0).normal(size=(2, 3, 4, 6))
        np.testing.assert_allclose(grad_feedforward(a, d),
                                   sum(grad_feedforward(a[i], d[i]) for i in range(3)))


class TestBackward:
    def test_dispatch(self):
        spec = NetworkSpec([3, 4, 4, 4, 2], [False, True, True], [(1, 3)])
        assert [layer_case(spec, l) for l in (1, 2, 3)] == [3, 2, 2]

    def test_feedforward_uses_case1_only(self):
        spec, w, x = _square_net(recurrent=False, skip=False)
        tr = forward(spec, w, x)
        d = (np.random.default_rng(2).random(tr.output.s.shape) < 0.3).astype(float)
        fields = error_fields(spec, w, tr, d, FAST)
        expected = {4: delta_output(d, tr, spec, w, FAST)}
        for l in (3, 2, 1):
            expected[l] = delta_hidden(l, expected[l + 1], w, tr, spec, FAST)
        for l in expected:
            assert np.array_equal(fields[l], expected[l])

    def test_zero_loss_zero_gradients(self):
        spec, w, x = _square_net()
        tr = forward(spec, w, x)
        grads = backward(spec, w, tr, tr.output.s, FAST)
        for g in grads.named().values():
            assert not g.any()

    def test_reverse_time_well_ordering(self):
        spec, w, x = _square_net(x_scale=1.5)
        tr = forward(spec, w, x)
        d = np.zeros_like(tr.output.s)
        seen = []

        def probe(t, delta):
            # everything before t is still untouched; column t is now written
            assert not delta[..., :t].any()
            seen.append(t)

        ctx = _context(spec, w, tr, 4)
        from scsr_snn.loss import spike_error
        reverse_scan(ctx, FAST, spike_err=spike_error(d, tr.output.s), on_step=probe)
        assert seen == list(range(x.shape[1] - 1, -1, -1))

    def test_theta_selection(self):
        spec, w, x = _square_net()
        tr = forward(spec, w, x)
        d = np.zeros_like(tr.output.s)
        none = backward(spec, w, tr, d, FAST, train_theta=False)
        some = backward(spec, w, tr, d, FAST, train_theta={2})
        assert all(not g.any() for g in none.theta.values())
        assert [l for l, g in some.theta.items() if g.any()] == [2]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_difference_oracle(self, seed):
        spec = scsr_spec((5, 6, 6, 6, 3))
        w, x, d = make_problem(spec, 15, seed, batch=1)
        report = check_gradients(spec, w, x, d, steepness=4.0, max_entries=12, seed=seed)
        assert set(report.max_rel_error) == {"W", "Ws", "Wskip", "theta"}
        assert report.passed(1e-4), report.max_rel_error

    def test_finite_difference_subtract_reset(self):
        spec = scsr_spec((4, 5, 5, 5, 2), reset_mode="subtract-threshold")
        w, x, d = make_problem(spec, 15, 3, batch=1)
        assert check_gradients(spec, w, x, d, max_entries=10).passed(1e-4)

    def test_corrupt_detected(self):
        spec = scsr_spec((4, 5, 5, 5, 2))
        w, x, d = make_problem(spec, 10, 0, batch=1)
        assert not check_gradients(spec, w, x, d, corrupt=True, max_entries=3).passed(1e-4)
