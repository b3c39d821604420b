# Copyright (C) 2026  The FloydNet developers
# License: GNU General Public License version 3, or any later version
# See top-level LICENSE file for more information

from unittest import TestCase

import numpy as np
import pytest
from scipy.special import erf

from floydnet.checks import PRIMITIVE_TOL, gradcheck_suite, primitive_checks
from floydnet.errors import MissingForwardRecord, NonFiniteError, ShapeError
from floydnet.nn import (GradTape, LinearParams, NormParams, Tensor, add,
                         checked, dot, gelu, grad_check, layer_norm, linear,
                         mul, place, reduce_sum, rms_norm, softmax, take,
                         unbroadcast)


class TestPrimitives(TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_linear(self):
        x = Tensor(self.rng.standard_normal((2, 3, 4)))
        p = LinearParams.init(4, 5, self.rng)
        out = linear(x, p)
        np.testing.assert_allclose(out.data,
                                   x.data @ p.weight.data + p.bias.data)
        with self.assertRaises(ShapeError):
            linear(Tensor(np.zeros((2, 3))), p)

    def test_layer_norm_statistics(self):
        x = Tensor(self.rng.standard_normal((6, 8)) * 3 + 1)
        out = layer_norm(x, NormParams.init(8)).data
        np.testing.assert_allclose(out.mean(axis=-1), 0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1, atol=1e-5)

    def test_layer_norm_ignores_a_constant_shift(self):
        x = self.rng.standard_normal((5, 8))
        p = NormParams.init(8)
        p.gain.data = self.rng.uniform(0.5, 2.0, 8)
        p.offset.data = self.rng.standard_normal(8)
        for shift in (-3.5, 0.25, 40.0):
            np.testing.assert_allclose(layer_norm(Tensor(x + shift), p).data,
                                       layer_norm(Tensor(x), p).data,
                                       atol=1e-10)

    def test_linear_is_additive(self):
        p = LinearParams.init(4, 3, self.rng)
        x = self.rng.standard_normal((6, 4))
        y = self.rng.standard_normal((6, 4))
        np.testing.assert_allclose(
            linear(Tensor(x + y), p).data,
            linear(Tensor(x), p).data + linear(Tensor(y), p).data
            - p.bias.data, atol=1e-12)
        no_bias = LinearParams.init(4, 3, self.rng, bias=False)
        np.testing.assert_allclose(
            linear(Tensor(x + y), no_bias).data,
            linear(Tensor(x), no_bias).data + linear(Tensor(y), no_bias).data,
            atol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        x = self.rng.standard_normal((7, 9, 11)) * 30
        for axis in (0, 1, -1):
            out = softmax(Tensor(x), axis=axis).data
            np.testing.assert_allclose(out.sum(axis=axis), 1.0, atol=1e-12)
            self.assertTrue((out >= 0).all())

    def test_rms_norm_statistics(self):
        x = Tensor(self.rng.standard_normal((6, 8)) * 3)
        out = rms_norm(x, NormParams.init(8, 'rms')).data
        np.testing.assert_allclose((out ** 2).mean(axis=-1), 1, atol=1e-5)

    def test_gelu_exact(self):
        x = np.linspace(-4, 4, 17)
        np.testing.assert_allclose(gelu(Tensor(x)).data,
                                   x * 0.5 * (1 + erf(x / np.sqrt(2))))

    def test_softmax_large_logits(self):
        out = softmax(Tensor([[1000.0, 1000.0, -1000.0]])).data
        np.testing.assert_allclose(out, [[0.5, 0.5, 0.0]])

    def test_non_finite_rejected(self):
        with self.assertRaises(NonFiniteError):
            checked(np.array([1.0, np.nan]), 'test')
        with self.assertRaises(NonFiniteError):
            mul(Tensor([1e200]), Tensor([1e200]))

    def test_shape_checks(self):
        with self.assertRaises(ShapeError):
            add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
        with self.assertRaises(ShapeError):
            dot(Tensor(np.zeros(3)), np.zeros(4))

    def test_unbroadcast(self):
        g = np.ones((4, 2, 3))
        np.testing.assert_array_equal(unbroadcast(g, (2, 1)),
                                      np.full((2, 1), 12.0))
        np.testing.assert_array_equal(unbroadcast(g, ()), 24.0)

    def test_take_repeated_index_accumulates(self):
        x = Tensor(np.arange(4.0))
        tape = GradTape()
        y = take(x, (np.array([1, 1, 3]),), tape)
        tape.backward(reduce_sum(y, tape))
        np.testing.assert_array_equal(x.grad, [0, 2, 0, 1])

    def test_place_gradients(self):
        base = Tensor(np.ones((3, 3)))
        value = Tensor(np.array([2.0]))
        tape = GradTape()
        out = place(base, (1,), value, tape)
        np.testing.assert_array_equal(out.data[1], [2.0, 2.0, 2.0])
        tape.backward(reduce_sum(out, tape))
        np.testing.assert_array_equal(base.grad[1], np.zeros(3))
        np.testing.assert_array_equal(base.grad[0], np.ones(3))
        np.testing.assert_array_equal(value.grad, [3.0])


class TestGradTape(TestCase):

    def test_accumulates_over_uses(self):
        x = Tensor(np.array([1.0, 2.0]))
        tape = GradTape()
        y = mul(x, x, tape)
        tape.backward(reduce_sum(add(y, x, tape), tape))
        np.testing.assert_array_equal(x.grad, [3.0, 5.0])

    def test_seed_scales(self):
        x = Tensor(np.array([1.0, 2.0]))
        tape = GradTape()
        tape.backward(dot(x, np.array([1.0, -1.0]), tape), seed=0.25)
        np.testing.assert_array_equal(x.grad, [0.25, -0.25])

    def test_missing_forward_record(self):
        with self.assertRaises(MissingForwardRecord):
            GradTape().backward(Tensor(np.ones(())))
        x = Tensor(np.ones(2))
        tape = GradTape()
        loss = reduce_sum(x, tape)
        tape.backward(loss)
        with self.assertRaises(MissingForwardRecord):
            tape.backward(loss)

    def test_untaped_forward_records_nothing(self):
        x = Tensor(np.ones(2))
        reduce_sum(x)
        self.assertIsNone(x.grad)


class TestGradCheck(TestCase):

    def test_every_primitive(self):
        for seed in range(3):
            checks = primitive_checks(np.random.default_rng(seed))
            for name, (f, params) in checks.items():
                report = grad_check(f, params, tol=PRIMITIVE_TOL, seed=seed)
                self.assertTrue(report.passed,
                                '%s: %s %s' % (name, report.errors,
                                               report.diagnostics))

    @pytest.mark.slow
    def test_twenty_seeds(self):
        for seed in range(20):
            for name, report in gradcheck_suite(seed):
                self.assertTrue(report.passed,
                                'seed %s, %s: %s' % (seed, name,
                                                    report.errors))

    def test_detects_wrong_gradient(self):
        x = Tensor(np.array([0.3, -1.2]))

        def broken(tape):
            out = Tensor(x.data ** 2)
            if tape is not None:
                # gradient off by a factor two
                tape.record('square', (x,), out, lambda g: (g * x.data,))
            return reduce_sum(out, tape)

        report = grad_check(broken, [('x', x)])
        self.assertFalse(report.passed)
        self.assertGreater(report.max_error, 0.1)

    def test_max_entries_sampling(self):
        x = Tensor(np.random.default_rng(1).standard_normal(50))
        w = np.random.default_rng(2).standard_normal(50)
        report = grad_check(lambda tape: dot(gelu(x, tape), w, tape),
                            {'x': x}, max_entries=5)
        self.assertTrue(report.passed)
        self.assertEqual(list(report.errors), ['x'])
