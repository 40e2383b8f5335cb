import numpy as np
import pytest

from chatscreen.core_math import Rng, gradient_check
from chatscreen.errors import ShapeError, UsageError
from chatscreen.lstm import (LstmLayerParams, LstmState, backward_stack,
                             cell_step, forward_stack, sequence_backward,
                             sequence_forward)

from oracles import scalar_cell_step

# frozen from the scalar oracle: sigmoid(1), tanh(1), and their combination
SIG1 = 0.7310585786300049
TANH1 = 0.7615941559557649
C_ONE_UNIT = 0.5567699411459397
S_ONE_UNIT = 0.36960635293570576


def make_params(rng, input_dim, hidden_dim, use_bias, dtype=np.float64):
    return LstmLayerParams.init(rng, input_dim, hidden_dim, use_bias=use_bias,
                                dtype=dtype)


def all_value_params(value, input_dim, hidden_dim, dtype=np.float64):
    u = np.full((input_dim, hidden_dim), value, dtype=dtype)
    w = np.full((hidden_dim, hidden_dim), value, dtype=dtype)
    return LstmLayerParams(Ui=u.copy(), Uf=u.copy(), Uo=u.copy(), Ug=u.copy(),
                           Wi=w.copy(), Wf=w.copy(), Wo=w.copy(), Wg=w.copy())


class TestCellStep:
    def test_all_zero_weights_give_zero_state(self):
        params = all_value_params(0.0, 2, 3)
        out = cell_step(np.zeros(2), LstmState.zeros(3, np.float64), params)
        assert np.array_equal(out.s, np.zeros(3))
        assert np.array_equal(out.c, np.zeros(3))

    def test_one_unit_all_ones_hand_values(self):
        params = all_value_params(1.0, 1, 1)
        out = cell_step(np.array([1.0]), LstmState.zeros(1, np.float64), params)
        assert abs(out.c[0] - C_ONE_UNIT) < 1e-12
        assert abs(out.s[0] - S_ONE_UNIT) < 1e-12

    @pytest.mark.parametrize("use_bias", [False, True])
    def test_matches_scalar_oracle(self, use_bias):
        rng = Rng(21)
        for _ in range(25):
            params = make_params(rng, 4, 3, use_bias)
            x = rng.uniform(-2, 2, (4,), dtype=np.float64)
            prev = LstmState(rng.uniform(-0.9, 0.9, (3,), dtype=np.float64),
                             rng.uniform(-1.5, 1.5, (3,), dtype=np.float64))
            got = cell_step(x, prev, params)
            s, c = scalar_cell_step(x.tolist(), prev.s.tolist(),
                                    prev.c.tolist(), params)
            assert np.abs(got.s - s).max() < 1e-12
            assert np.abs(got.c - c).max() < 1e-12

    def test_hidden_state_inside_open_interval(self):
        rng = Rng(8)
        for _ in range(20):
            params = make_params(rng, 3, 5, use_bias=True)
            x = rng.uniform(-5, 5, (3,), dtype=np.float64)
            prev = LstmState(rng.uniform(-0.9, 0.9, (5,), dtype=np.float64),
                             rng.uniform(-3, 3, (5,), dtype=np.float64))
            out = cell_step(x, prev, params)
            assert np.all(out.s > -1) and np.all(out.s < 1)
            assert np.all(np.abs(out.c) <= np.abs(prev.c) + 1 + 1e-12)

    def test_dimension_mismatch(self):
        params = all_value_params(0.0, 2, 3)
        with pytest.raises(ShapeError):
            cell_step(np.zeros(5), LstmState.zeros(3, np.float64), params)
        with pytest.raises(ShapeError):
            cell_step(np.zeros(2), LstmState.zeros(4, np.float64), params)

    def test_bias_all_or_none_enforced(self):
        params = all_value_params(0.0, 2, 3)
        params.bi = np.zeros(3)
        with pytest.raises(ShapeError):
            params.validate()


class TestSequenceForward:
    def test_length_one_equals_cell_step(self):
        rng = Rng(4)
        params = make_params(rng, 3, 4, use_bias=True)
        x = rng.uniform(-1, 1, (3,), dtype=np.float64)
        states, _ = sequence_forward([x], LstmState.zeros(4, np.float64),
                                     params)
        single = cell_step(x, LstmState.zeros(4, np.float64), params)
        assert np.array_equal(states[0].s, single.s)
        assert np.array_equal(states[0].c, single.c)

    def test_zero_weights_zero_states(self):
        params = all_value_params(0.0, 2, 3)
        states, _ = sequence_forward(np.zeros((4, 2)),
                                     LstmState.zeros(3, np.float64), params)
        for st in states:
            assert np.array_equal(st.s, np.zeros(3))

    def test_final_state_equals_manual_fold(self):
        rng = Rng(31)
        params = make_params(rng, 3, 4, use_bias=True)
        xs = rng.uniform(-1, 1, (5, 3), dtype=np.float64)
        states, _ = sequence_forward(xs, LstmState.zeros(4, np.float64),
                                     params)
        folded = LstmState.zeros(4, np.float64)
        for t in range(5):
            folded = cell_step(xs[t], folded, params)
        assert np.abs(states[-1].s - folded.s).max() < 1e-12
        assert np.abs(states[-1].c - folded.c).max() < 1e-12

    def test_empty_sequence_rejected(self):
        params = all_value_params(0.0, 2, 3)
        with pytest.raises(UsageError):
            sequence_forward(np.zeros((0, 2)), LstmState.zeros(3, np.float64),
                             params)


class TestSequenceBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = Rng(12)
        params = make_params(rng, 3, 4, use_bias=True)
        xs = rng.uniform(-1, 1, (6, 3), dtype=np.float64)
        _, trace = sequence_forward(xs, LstmState.zeros(4, np.float64), params)
        grads, d_inputs = sequence_backward(trace, [np.zeros(4)] * 6)
        for g in grads.param_list():
            assert np.array_equal(g, np.zeros_like(g))
        for d in d_inputs:
            assert np.array_equal(d, np.zeros(3))

    def test_gradient_mismatch_rejected(self):
        rng = Rng(12)
        params = make_params(rng, 3, 4, use_bias=True)
        _, trace = sequence_forward(np.zeros((6, 3)),
                                    LstmState.zeros(4, np.float64), params)
        with pytest.raises(UsageError):
            sequence_backward(trace, [np.zeros(4)] * 5)
        with pytest.raises(UsageError):
            sequence_backward(trace, [np.zeros(3)] * 6)

    @pytest.mark.parametrize("use_bias", [False, True])
    def test_bptt_matches_finite_differences(self, use_bias):
        rng = Rng(77)
        params = make_params(rng, 3, 4, use_bias)
        xs = rng.uniform(-1, 1, (6, 3), dtype=np.float64)

        def loss_and_grads():
            states, trace = sequence_forward(
                xs, LstmState.zeros(4, np.float64), params)
            upstream = [np.zeros(4)] * 5 + [np.ones(4)]
            grads, _ = sequence_backward(trace, upstream)
            return float(states[-1].s.sum()), grads.param_list()

        err = gradient_check(loss_and_grads, params.param_list(), 1e-4)
        assert err < 1e-4

    def test_input_gradients_match_finite_differences(self):
        rng = Rng(78)
        params = make_params(rng, 3, 4, use_bias=True)
        xs = rng.uniform(-1, 1, (5, 3), dtype=np.float64)

        def loss_and_grads():
            states, trace = sequence_forward(
                xs, LstmState.zeros(4, np.float64), params)
            upstream = [np.zeros(4)] * 4 + [np.ones(4)]
            _, d_inputs = sequence_backward(trace, upstream)
            return float(states[-1].s.sum()), [np.stack(d_inputs)]

        err = gradient_check(loss_and_grads, [xs], 1e-4)
        assert err < 1e-4

    def test_two_layer_stack_matches_finite_differences(self):
        rng = Rng(99)
        layer1 = make_params(rng, 3, 4, use_bias=True)
        layer2 = make_params(rng, 4, 4, use_bias=True)
        xs = rng.uniform(-1, 1, (6, 1, 3), dtype=np.float64)

        def loss_and_grads():
            traces = forward_stack(xs, [layer1, layer2])
            loss = float(traces[1].S[-1].sum())
            d_top = np.zeros_like(traces[1].S)
            d_top[-1] = 1.0
            grads, _ = backward_stack(traces, d_top)
            return loss, grads[0].param_list() + grads[1].param_list()

        params = layer1.param_list() + layer2.param_list()
        assert gradient_check(loss_and_grads, params, 1e-4) < 1e-4

    def test_forward_backward_leave_params_unmodified(self):
        rng = Rng(13)
        params = make_params(rng, 3, 4, use_bias=True)
        before = [p.copy() for p in params.param_list()]
        xs = rng.uniform(-1, 1, (5, 3), dtype=np.float64)
        _, trace = sequence_forward(xs, LstmState.zeros(4, np.float64), params)
        sequence_backward(trace, [np.ones(4)] * 5)
        for old, new in zip(before, params.param_list()):
            assert np.array_equal(old, new)
