# -*- coding: utf-8 -*-
import threading
import unittest

import numpy as np

from hr_vae.exceptions import ContractError, DomainError
from hr_vae.models import tensor as T

SEEDS = range(100)
TOLERANCE = 1e-4


class TestTensorOps(unittest.TestCase):
    """Forward values and error contracts of the tensor ops."""

    def test_01_matmul_identity(self):
        """Multiplying by the identity returns the right operand."""
        result = T.matmul(T.Tensor([[1, 0], [0, 1]]), T.Tensor([[3], [4]]))
        np.testing.assert_array_equal(result.data, [[3], [4]])

    def test_02_sigmoid_symmetry_point(self):
        """sigmoid(0) is exactly one half and large inputs do not overflow."""
        self.assertEqual(T.sigmoid(T.Tensor([0.0])).item(), 0.5)
        values = T.sigmoid(T.Tensor([-1000.0, 1000.0])).data
        np.testing.assert_array_equal(values, [0.0, 1.0])

    def test_03_cross_entropy_uniform_logits(self):
        """Uniform logits over three classes cost ln 3 whatever the target."""
        loss = T.softmax_cross_entropy(T.Tensor([0.0, 0.0, 0.0]), 1)
        self.assertAlmostEqual(loss.item(), np.log(3.0), places=12)

    def test_04_cross_entropy_ignored_rows(self):
        """Ignored targets add neither loss nor gradient."""
        logits = T.Tensor([[1.0, 2.0, 0.5], [0.3, -0.2, 0.1]], requires_grad=True)
        loss = T.softmax_cross_entropy(logits, [2, 0], ignore_id=0)
        single = T.softmax_cross_entropy(T.Tensor([1.0, 2.0, 0.5]), 2)
        self.assertAlmostEqual(loss.item(), single.item(), places=12)
        T.backward(loss)
        np.testing.assert_array_equal(logits.grad[1], np.zeros(3))
        rows = T.softmax_cross_entropy(logits, [2, 0], ignore_id=0, reduction='none')
        self.assertEqual(rows.data[1], 0.0)

    def test_05_shape_mismatch_names_both_shapes(self):
        """A shape mismatch raises a contract error that reports both shapes."""
        with self.assertRaises(ContractError) as caught:
            T.add(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((3, 2))))
        self.assertIn('(2, 3)', caught.exception.message)
        self.assertIn('(3, 2)', caught.exception.message)
        with self.assertRaises(ContractError):
            T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))

    def test_06_leading_batch_broadcast_only(self):
        """A [D] operand broadcasts over [B × D]; nothing else broadcasts."""
        result = T.add(T.Tensor(np.zeros((2, 3))), T.Tensor([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(result.data, [[1, 2, 3], [1, 2, 3]])
        with self.assertRaises(ContractError):
            T.add(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((2, 1))))

    def test_07_log_domain(self):
        """log of a non-positive value is a domain error."""
        with self.assertRaises(DomainError):
            T.log(T.Tensor([1.0, 0.0]))
        with self.assertRaises(ArithmeticError):
            T.log(T.Tensor([-2.0]))

    def test_08_invalid_tensors(self):
        """Zero-sized dimensions are rejected; the validity check spots NaN."""
        with self.assertRaises(ContractError):
            T.Tensor(np.zeros((0, 3)))
        self.assertFalse(T.Tensor([1.0, np.nan]).is_finite())
        self.assertTrue(T.Tensor([1.0, 2.0]).is_finite())

    def test_09_structure_ops(self):
        """concat, slice, stack, reshape and gather_steps move values as expected."""
        a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = T.Tensor([[5.0], [6.0]])
        np.testing.assert_array_equal(T.concat(a, b, axis=1).data, [[1, 2, 5], [3, 4, 6]])
        np.testing.assert_array_equal(T.slice(a, 1, 1, 2).data, [[2], [4]])
        stacked = T.stack([a, a], axis=1)
        self.assertEqual(stacked.shape, (2, 2, 2))
        np.testing.assert_array_equal(T.gather_steps(stacked, [0, 1]).data, [[1, 2], [3, 4]])
        self.assertEqual(T.reshape(a, (4,)).shape, (4,))
        with self.assertRaises(ContractError):
            T.slice(a, 1, 1, 3)

    def test_10_forward_is_deterministic(self):
        """Identical inputs give bit-identical outputs."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 5))
        w = rng.normal(size=(5, 2))
        first = T.tanh(T.matmul(T.Tensor(x), T.Tensor(w))).data
        second = T.tanh(T.matmul(T.Tensor(x), T.Tensor(w))).data
        self.assertEqual(first.tobytes(), second.tobytes())


class TestBackward(unittest.TestCase):
    """Reverse-mode gradients against analytic values and finite differences."""

    def test_01_sum_of_squares(self):
        """d/dx sum(x * x) = 2x."""
        x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
        T.backward(T.sum(T.mul_elementwise(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_02_sigmoid_derivative_at_zero(self):
        """sigmoid'(0) = 1/4."""
        w = T.Tensor([0.0], requires_grad=True)
        T.backward(T.sigmoid(T.mul_elementwise(w, 1.0)))
        self.assertEqual(w.grad[0], 0.25)

    def test_03_accumulation_over_two_consumers(self):
        """A tensor used twice receives the sum of both path gradients."""
        x = T.Tensor([2.0], requires_grad=True)
        loss = T.add(T.mul_elementwise(x, 3.0), T.exp(x))
        T.backward(loss)
        self.assertAlmostEqual(x.grad[0], 3.0 + np.exp(2.0), places=12)

    def test_04_non_scalar_loss_rejected(self):
        """backward needs a single-element loss."""
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(ContractError):
            T.backward(T.mul_elementwise(x, 2.0))

    def test_05_graph_order_and_single_visit(self):
        """Every node follows its operands and appears once."""
        x = T.Tensor([[0.5, -0.3]], requires_grad=True)
        shared = T.tanh(x)
        loss = T.sum(T.add(shared, T.mul_elementwise(shared, shared)))
        graph = T.ComputeGraph(loss)
        positions = {id(node): index for index, node in enumerate(graph.nodes)}
        self.assertEqual(len(positions), len(graph.nodes))
        for node in graph.nodes:
            for parent in node._parents:
                self.assertLess(positions[id(parent)], positions[id(node)])

    def test_06_long_chain_has_no_recursion_limit(self):
        """A 5000-op chain backpropagates without hitting the recursion limit."""
        x = T.Tensor([1.0], requires_grad=True)
        y = x
        for _ in range(5000):
            y = T.add(y, 0.0)
        T.backward(y)
        self.assertEqual(x.grad[0], 1.0)

    def test_07_no_grad_is_thread_local(self):
        """Disabling recording in one thread leaves other threads recording."""
        seen = {}
        x = T.Tensor([1.0], requires_grad=True)

        def worker():
            seen['worker'] = T.is_grad_enabled()
            seen['tracked'] = T.exp(x).requires_grad

        with T.no_grad():
            self.assertFalse(T.exp(x).requires_grad)
            thread = threading.Thread(target=worker)
            thread.start()
            thread.join()
        self.assertTrue(seen['worker'])
        self.assertTrue(seen['tracked'])
        self.assertTrue(T.is_grad_enabled())

    def test_08_grad_check_sum_of_squares(self):
        """grad_check on a sum of squares is essentially exact."""
        error = T.grad_check(lambda x: T.sum(T.mul_elementwise(x, x)), [1.0, 2.0])
        self.assertLess(error, 1e-6)

    def test_09_grad_check_domain_error(self):
        """A non-finite function value is a domain error."""
        with self.assertRaises(DomainError):
            T.grad_check(lambda x: T.sum(T.exp(T.mul_elementwise(x, 1000.0))), [1.0])

    def test_10_every_op_matches_finite_differences(self):
        """Each op passes the finite-difference check at 100 random points."""
        ids = np.array([[0, 1], [1, 1]])

        def elementwise(x):
            return T.sum(T.mul_elementwise(T.sigmoid(x), T.tanh(x)))

        def linear(x):
            weight = T.Tensor([[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]])
            return T.sum(T.tanh(T.matmul(x, T.transpose(weight))))

        def structural(x):
            joined = T.concat(x, T.exp(T.mul_elementwise(x, 0.5)), axis=1)
            part = T.slice(joined, 1, 1, 5)
            stacked = T.stack([part, T.neg(part)], axis=1)
            picked = T.gather_steps(stacked, [1, 0])
            return T.mean(T.mul_elementwise(T.reshape(picked, (8,)), T.reshape(picked, (8,))))

        def logarithm(x):
            return T.sum(T.log(T.add(T.mul_elementwise(x, x), 1.0)))

        def cross_entropy(x):
            return T.softmax_cross_entropy(x, [0, 2], ignore_id=None, reduction='mean')

        def lookup(table):
            return T.sum(T.mul_elementwise(T.take(table, ids), T.take(table, ids)))

        def sums(x):
            return T.sum(T.sub(T.sum(x, axis=1), 1.0))

        functions = [elementwise, linear, structural, logarithm, cross_entropy, lookup, sums]
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            point = rng.normal(size=(2, 3))
            for function in functions:
                error = T.grad_check(function, point)
                self.assertLess(error, TOLERANCE, "%s at seed %s" % (function.__name__, seed))

    def test_11_composite_graph(self):
        """A random 3-layer network matches finite differences on every weight."""
        for seed in range(10):
            rng = np.random.default_rng(seed)
            params = {
                'w1': T.Tensor(rng.normal(size=(4, 3)), requires_grad=True, name='w1'),
                'w2': T.Tensor(rng.normal(size=(3, 3)), requires_grad=True, name='w2'),
                'w3': T.Tensor(rng.normal(size=(3, 2)), requires_grad=True, name='w3'),
            }
            x = T.Tensor(rng.normal(size=(2, 4)))

            def loss_fn():
                hidden = T.tanh(T.matmul(x, params['w1']))
                hidden = T.sigmoid(T.matmul(hidden, params['w2']))
                return T.softmax_cross_entropy(T.matmul(hidden, params['w3']), [1, 0])

            errors = T.check_parameter_gradients(loss_fn, params)
            self.assertLess(max(errors.values()), TOLERANCE, errors)

    def test_12_directional_check(self):
        """Random directions alone confirm a correct gradient and expose a detached path."""
        rng = np.random.default_rng(3)
        params = {
            'w': T.Tensor(rng.normal(size=(3, 4)), requires_grad=True, name='w'),
            'b': T.Tensor(rng.normal(size=(4,)), requires_grad=True, name='b'),
        }
        calls = []

        def loss_fn():
            calls.append(1)
            return T.sum(T.tanh(params['w'] * params['w'] + params['b']))

        errors = T.check_parameter_gradients(loss_fn, params, directions=3, rng=rng)
        self.assertLess(max(errors.values()), TOLERANCE, errors)
        self.assertEqual(len(calls), 1 + 2 * 3 * len(params))

        def detached_loss_fn():
            return T.sum(T.mul_elementwise(params['w'], T.Tensor(params['w'].data)))

        errors = T.check_parameter_gradients(detached_loss_fn, {'w': params['w']}, directions=2, rng=rng)
        self.assertGreater(errors['w'], 1e-3)
