import threading
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from src.tensor import ComputationRecord, Tensor, backward, is_grad_enabled, no_grad, ops, parameter
from src.utils.errors import AutogradError, NonFiniteError, ShapeError


finite = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False, allow_infinity=False)


class ArithmeticGradientTests(unittest.TestCase):
    def test_broadcast_add_sums_over_stretched_axes(self):
        a = parameter(np.arange(6.0).reshape(2, 3))
        b = parameter(np.array([1.0, 2.0, 3.0]))
        backward(ops.sum(a + b))
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(b.grad, np.full(3, 2.0))

    def test_matmul_gradients(self):
        rng = np.random.default_rng(0)
        a = parameter(rng.normal(size=(2, 3)))
        b = parameter(rng.normal(size=(3, 4)))
        backward(ops.sum(a @ b))
        np.testing.assert_allclose(a.grad, np.ones((2, 4)) @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ np.ones((2, 4)))

    def test_reused_leaf_accumulates(self):
        x = parameter(np.array([1.0, -2.0, 3.0]))
        backward(ops.sum(x * x))
        np.testing.assert_array_equal(x.grad, 2.0 * x.data)

    def test_take_accumulates_repeated_rows(self):
        x = parameter(np.arange(6.0).reshape(3, 2))
        backward(ops.sum(ops.take(x, np.array([0, 0, 2]), axis=0)))
        np.testing.assert_array_equal(x.grad, np.array([[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]))

    def test_scalar_operators(self):
        x = parameter(np.array([2.0, 4.0]))
        y = (1.0 - x) * 3.0 / 2.0 + 1.0
        np.testing.assert_array_equal(y.data, np.array([-0.5, -3.5]))
        backward(ops.sum(-y))
        np.testing.assert_array_equal(x.grad, np.full(2, 1.5))


class RecordingTests(unittest.TestCase):
    def test_record_orders_inputs_before_outputs(self):
        x = parameter(np.ones((2, 2)))
        loss = ops.sum(ops.sigmoid(x))
        self.assertEqual(ComputationRecord.trace(loss).ops(), ["sigmoid", "sum"])

    def test_no_grad_records_nothing(self):
        x = parameter(np.ones(3))
        with no_grad():
            self.assertFalse(is_grad_enabled())
            y = ops.tanh(x)
        self.assertTrue(is_grad_enabled())
        self.assertFalse(y.requires_grad)
        self.assertIsNone(y.node)

    def test_no_grad_is_per_thread(self):
        seen = []
        with no_grad():
            worker = threading.Thread(target=lambda: seen.append(is_grad_enabled()))
            worker.start()
            worker.join()
        self.assertEqual(seen, [True])

    def test_backward_needs_a_scalar(self):
        x = parameter(np.ones(3))
        with self.assertRaises(AutogradError):
            backward(x * 2.0)

    def test_backward_on_a_leaf_is_rejected(self):
        with self.assertRaises(AutogradError):
            backward(parameter(np.ones(())))


class ValidationTests(unittest.TestCase):
    def test_non_finite_input_is_rejected(self):
        with self.assertRaises(NonFiniteError):
            ops.add(np.array([np.nan, 1.0]), 1.0)

    def test_shape_errors_name_the_operation(self):
        cases = [
            ("add", lambda: ops.add(np.ones((2, 3)), np.ones(4))),
            ("matmul", lambda: ops.matmul(np.ones((2, 3)), np.ones((2, 3)))),
            ("reshape", lambda: ops.reshape(np.ones(6), (4, 2))),
            ("concat", lambda: ops.concat([np.ones((2, 2)), np.ones((3, 3))], axis=0)),
            ("softmax", lambda: ops.softmax(np.ones(3), axis=2)),
        ]
        for op, call in cases:
            with self.subTest(op=op):
                with self.assertRaises(ShapeError) as ctx:
                    call()
                self.assertIn(op, str(ctx.exception))

    def test_dropout(self):
        x = Tensor(np.ones((4, 4)))
        self.assertIs(ops.dropout(x, 0.5, train=False), x)
        with self.assertRaises(ValueError):
            ops.dropout(x, 0.5, train=True)
        dropped = ops.dropout(x, 0.5, train=True, rng=np.random.default_rng(0))
        self.assertTrue(set(np.unique(dropped.data)) <= {0.0, 2.0})


class PrimitivePropertyTests(unittest.TestCase):
    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=finite), st.floats(min_value=-100.0, max_value=100.0))
    def test_softmax_rows_are_stochastic_and_shift_invariant(self, values, shift):
        out = ops.softmax(values, axis=-1).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
        self.assertTrue(np.all(out >= 0))
        np.testing.assert_allclose(ops.softmax(values + shift, axis=-1).data, out, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (4, 6), elements=finite))
    def test_layer_norm_standardizes_rows(self, values):
        out = ops.layer_norm(values, np.ones(6), np.zeros(6)).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-9)
        spread = values.std(axis=-1)
        for row, s in zip(out, spread):
            if s > 1e-2:
                self.assertAlmostEqual(float(row.var()), s * s / (s * s + 1e-5), places=6)


if __name__ == "__main__":
    unittest.main()
