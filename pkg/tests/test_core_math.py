import math

import numpy as np
import pytest

from chatscreen.core_math import (AdamOptimizer, Rng, affine, cross_entropy,
                                  gradient_check, make_optimizer, sgd_step,
                                  sigmoid, softmax, tanh_act)
from chatscreen.errors import NumericError, ShapeError, UsageError

from oracles import triple_loop_matmul


class TestAffine:
    def test_identity(self):
        out = affine(np.array([[1.0, 2.0]]), np.eye(2))
        assert np.allclose(out, [[1.0, 2.0]])

    def test_zero_input_passes_bias(self):
        out = affine(np.zeros((1, 2)), np.ones((2, 2)), np.array([3.0, 4.0]))
        assert np.allclose(out, [[3.0, 4.0]])

    def test_matches_triple_loop_oracle(self):
        rng = Rng(17)
        x = rng.uniform(-2, 2, (3, 4), dtype=np.float64)
        w = rng.uniform(-2, 2, (4, 2), dtype=np.float64)
        expect = np.array(triple_loop_matmul(x.tolist(), w.tolist()))
        assert np.abs(affine(x, w) - expect).max() < 1e-12

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(1, 3\).*\(2, 2\)"):
            affine(np.zeros((1, 3)), np.zeros((2, 2)))

    def test_bad_bias_shape(self):
        with pytest.raises(ShapeError):
            affine(np.zeros((1, 2)), np.zeros((2, 2)), np.zeros(3))


class TestSigmoid:
    def test_zero_is_half(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_saturates_without_overflow(self):
        value = sigmoid(np.array([50.0]))[0]
        assert abs(value - 1.0) < 1e-15
        assert sigmoid(np.array([-745.0]))[0] >= 0.0  # no overflow warning

    def test_scalar_oracle(self):
        assert abs(sigmoid(np.array([1.0]))[0]
                   - 0.7310585786300049) < 1e-15

    def test_monotone_on_grid(self):
        grid = sigmoid(np.linspace(-6, 6, 101))
        assert np.all(np.diff(grid) > 0)

    def test_complement_identity(self):
        xs = np.linspace(-20, 20, 41)
        total = sigmoid(xs) + sigmoid(-xs)
        assert np.abs(total - 1.0).max() < 1e-12


class TestTanh:
    def test_zero(self):
        assert tanh_act(np.array([0.0]))[0] == 0.0

    def test_odd_symmetry(self):
        xs = Rng(3).uniform(-4, 4, (50,), dtype=np.float64)
        assert np.allclose(tanh_act(-xs), -tanh_act(xs))

    def test_scalar_oracle(self):
        assert abs(tanh_act(np.array([1.0]))[0]
                   - 0.7615941559557649) < 1e-15

    def test_range_and_monotone(self):
        grid = tanh_act(np.linspace(-5, 5, 101))
        assert np.all(np.diff(grid) > 0)
        assert grid.min() > -1 and grid.max() < 1


class TestSoftmax:
    def test_uniform(self):
        assert np.allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3)

    def test_analytically_forced(self):
        out = softmax([math.log(2), 0.0])
        assert np.abs(out - [2 / 3, 1 / 3]).max() < 1e-12

    def test_large_input_stable(self):
        out = softmax([1000.0, 0.0])
        assert np.isfinite(out).all()
        assert abs(out[0] - 1.0) < 1e-12 and out[1] < 1e-300

    def test_sums_to_one(self):
        rng = Rng(5)
        for _ in range(20):
            v = rng.uniform(-30, 30, (7,), dtype=np.float64)
            assert abs(softmax(v).sum() - 1.0) < 1e-9

    def test_shift_invariance(self):
        v = np.array([0.3, -1.2, 2.0, 0.0])
        assert np.abs(softmax(v) - softmax(v + 11.5)).max() < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            softmax([])


class TestCrossEntropy:
    def test_uniform_eight_classes(self):
        pred = np.full(8, 1 / 8)
        assert abs(cross_entropy(pred, 3) - 2.0794415416798357) < 1e-12

    def test_certain_prediction(self):
        assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0

    def test_scalar_oracle(self):
        assert abs(cross_entropy(np.array([0.7, 0.3]), 1)
                   - 1.2039728043259361) < 1e-12

    def test_out_of_range_index(self):
        with pytest.raises(UsageError):
            cross_entropy(np.array([0.5, 0.5]), 2)
        with pytest.raises(UsageError):
            cross_entropy(np.array([0.5, 0.5]), -1)

    def test_zero_probability_clamped(self):
        assert abs(cross_entropy(np.array([1.0, 0.0]), 1)
                   - (-math.log(1e-12))) < 1e-9


class TestSgdStep:
    def test_zero_lr_no_change(self):
        p = np.array([1.0, 2.0])
        sgd_step([p], [np.array([5.0, 5.0])], lr=0.0)
        assert np.array_equal(p, [1.0, 2.0])

    def test_basic_step(self):
        p = np.array([1.0])
        sgd_step([p], [np.array([2.0])], lr=0.5)
        assert np.array_equal(p, [0.0])

    def test_global_norm_clip_scales_gradient(self):
        # ||g|| = 4 against threshold 1 -> effective gradient scaled by 0.25
        p = np.array([1.0])
        sgd_step([p], [np.array([4.0])], lr=1.0, clip_norm=1.0)
        assert abs(p[0] - 0.0) < 1e-12

    def test_clip_inactive_below_threshold(self):
        p = np.array([1.0])
        sgd_step([p], [np.array([0.5])], lr=1.0, clip_norm=1.0)
        assert abs(p[0] - 0.5) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_step([np.zeros(2)], [np.zeros(3)], lr=0.1)
        with pytest.raises(ShapeError):
            sgd_step([np.zeros(2)], [], lr=0.1)


class TestAdam:
    def test_deterministic(self):
        def run():
            p = np.array([1.0, -2.0], dtype=np.float32)
            opt = AdamOptimizer(lr=0.1)
            for _ in range(5):
                opt.step([p], [2 * p])
            return p

        assert np.array_equal(run(), run())

    def test_descends_quadratic(self):
        p = np.array([3.0], dtype=np.float64)
        opt = AdamOptimizer(lr=0.2)
        for _ in range(100):
            opt.step([p], [2 * p])
        assert abs(p[0]) < 0.5

    def test_unknown_optimizer_rejected(self):
        with pytest.raises(UsageError):
            make_optimizer("adagrad", 0.1)


class TestGradientCheck:
    def test_quadratic_loss(self):
        p = Rng(9).uniform(-1, 1, (4, 3), dtype=np.float64)

        def loss_and_grads():
            return 0.5 * float(np.sum(p * p)), [p.copy()]

        assert gradient_check(loss_and_grads, [p], 1e-4) < 1e-8

    def test_detects_corrupted_gradient(self):
        p = Rng(9).uniform(0.5, 1.5, (3,), dtype=np.float64)

        def loss_and_grads():
            return 0.5 * float(np.sum(p * p)), [2.0 * p]

        err = gradient_check(loss_and_grads, [p], 1e-4)
        assert 0.4 < err < 0.6

    def test_epsilon_range_enforced(self):
        p = np.zeros(2, dtype=np.float64)
        fn = lambda: (0.0, [np.zeros(2)])
        with pytest.raises(UsageError):
            gradient_check(fn, [p], 1e-7)
        with pytest.raises(UsageError):
            gradient_check(fn, [p], 1e-2)

    def test_float32_rejected(self):
        p = np.zeros(2, dtype=np.float32)
        with pytest.raises(UsageError):
            gradient_check(lambda: (0.0, [np.zeros(2)]), [p], 1e-4)

    def test_non_finite_loss(self):
        p = np.ones(1, dtype=np.float64)
        with pytest.raises(NumericError):
            gradient_check(lambda: (float("nan"), [np.zeros(1)]), [p], 1e-4)


class TestSimpleRecurrenceComposition:
    """The non-gated recurrence s_t = tanh(x_t W + s_{t-1} U) with a
    softmax readout composes from the exported ops; only LSTM stacks are
    trained, but the math must hold together."""

    def test_fold_matches_scalar_oracle(self):
        rng = Rng(63)
        w = rng.uniform(-1, 1, (3, 4), dtype=np.float64)
        u = rng.uniform(-1, 1, (4, 4), dtype=np.float64)
        v = rng.uniform(-1, 1, (4, 5), dtype=np.float64)
        xs = rng.uniform(-1, 1, (6, 3), dtype=np.float64)
        s = np.zeros((1, 4))
        for t in range(6):
            s = tanh_act(affine(xs[t][None, :], w) + affine(s, u))
        y = softmax((s @ v)[0])
        s_ref = [0.0] * 4
        for t in range(6):
            nxt = []
            for j in range(4):
                a = sum(xs[t][k] * w[k][j] for k in range(3))
                a += sum(s_ref[k] * u[k][j] for k in range(4))
                nxt.append(math.tanh(a))
            s_ref = nxt
        assert np.abs(s[0] - s_ref).max() < 1e-12
        assert abs(y.sum() - 1.0) < 1e-12


class TestRng:
    def test_same_seed_same_sequence(self):
        a = Rng(123).uniform(-1, 1, (10,), dtype=np.float64)
        b = Rng(123).uniform(-1, 1, (10,), dtype=np.float64)
        assert np.array_equal(a, b)

    def test_derived_streams_differ_by_name(self):
        base = Rng(7)
        a = base.derive("lm").uniform(0, 1, (5,), dtype=np.float64)
        b = base.derive("scd").uniform(0, 1, (5,), dtype=np.float64)
        assert not np.array_equal(a, b)

    def test_derivation_is_stable(self):
        assert Rng(7).derive("stage").seed == Rng(7).derive("stage").seed
