import unittest

import numpy as np
from scipy.signal import correlate

from src.autodiff import (
    Adam,
    AdamState,
    BatchNorm2d,
    ConvBnRelu,
    Conv2d,
    DoubleConv,
    Graph,
    Linear,
    Tensor,
    adam_step,
    concat,
    constant,
    conv2d,
    cross_entropy,
    dice_loss,
    global_avg_pool,
    maxpool2x,
    mse_loss,
    no_grad,
    parameter,
    relu,
    set_debug,
    softmax,
    upsample_nearest2x,
)
from src.autodiff.gradcheck import CASES, check_case, run_suite
from src.errors import BatchTooSmall, LabelOutOfRange, NonFiniteValue, ShapeMismatch


class TestGradcheck(unittest.TestCase):
    def test_every_op_passes(self):
        results = run_suite(seed=0, n_seeds=10)
        self.assertEqual([r.op for r in results], list(CASES))
        for result in results:
            self.assertTrue(result.passed, f"{result.op}: {result.max_rel_error:.3e}")
            self.assertEqual(result.seeds, 10)

    def test_corrupted_backward_is_caught(self):
        result = check_case("conv2d", seed=0, n_seeds=2, corrupt=True)
        self.assertFalse(result.passed)
        self.assertGreater(result.max_rel_error, 0.1)

    def test_run_suite_corrupts_only_named_case(self):
        results = {r.op: r for r in run_suite(seed=1, n_seeds=1, corrupt="relu")}
        self.assertFalse(results["relu"].passed)
        self.assertTrue(results["sigmoid"].passed)


class TestGraph(unittest.TestCase):
    def test_shared_subexpression_accumulates(self):
        x = parameter(np.array([2.0, -3.0]))
        y = x * x + x * 3.0
        y.sum().backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 3.0)

    def test_backward_is_linear_in_the_loss(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            conv = Conv2d(2, 3, 3, rng)
            head = Linear(3, 4, rng)
            params = conv.parameters() + head.parameters()
            images = rng.normal(size=(2, 2, 6, 6))
            labels = rng.integers(0, 4, size=2)
            target = rng.normal(size=(2, 4))

            def losses():
                logits = head(global_avg_pool(relu(conv(Tensor(images)))))
                return cross_entropy(logits, labels), mse_loss(logits, target)

            def grads(pick):
                for p in params:
                    p.zero_grad()
                pick(*losses()).backward()
                return [p.grad.copy() for p in params]

            first = grads(lambda a, b: a)
            second = grads(lambda a, b: b)
            combined = grads(lambda a, b: a + b)
            for g1, g2, g in zip(first, second, combined):
                np.testing.assert_allclose(g, g1 + g2, rtol=1e-10, atol=1e-12)

    def test_graph_nodes_in_creation_order(self):
        x = parameter(np.ones(3))
        loss = (x * 2.0).sum()
        ids = [node._id for node in Graph.build(loss).nodes]
        self.assertEqual(ids, sorted(ids))
        self.assertIs(Graph.build(loss).nodes[-1], loss)

    def test_broadcast_gradient_is_summed(self):
        x = parameter(np.ones((2, 3)))
        b = parameter(np.zeros(3))
        (x + b).sum().backward()
        np.testing.assert_allclose(b.grad, [2.0, 2.0, 2.0])

    def test_no_grad_builds_nothing(self):
        x = parameter(np.ones(2))
        with no_grad():
            y = x * 2.0
        self.assertFalse(y.requires_grad)
        with self.assertRaises(ShapeMismatch):
            y.sum().backward()

    def test_constant_receives_no_grad(self):
        c = constant(np.ones(2))
        x = parameter(np.ones(2))
        (c * x).sum().backward()
        self.assertIsNone(c.grad)

    def test_debug_mode_raises_on_nan(self):
        set_debug(True)
        try:
            with self.assertRaises(NonFiniteValue):
                parameter(np.array([np.inf])) * 0.0
        finally:
            set_debug(False)


class TestOps(unittest.TestCase):
    def test_conv2d_matches_scipy_correlation(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 2, 6, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        out = conv2d(Tensor(x), Tensor(w), padding=1).data
        padded = np.pad(x[0], ((0, 0), (1, 1), (1, 1)))
        for o in range(3):
            expected = correlate(padded, w[o], mode="valid")[0]
            np.testing.assert_allclose(out[0, o], expected, atol=1e-12)

    def test_conv2d_channel_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_maxpool_ties_route_to_first(self):
        x = parameter(np.ones((1, 1, 2, 2)))
        maxpool2x(x).sum().backward()
        np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_upsample_repeats_blocks(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
        up = upsample_nearest2x(x).data[0, 0]
        self.assertEqual(up.shape, (4, 4))
        np.testing.assert_array_equal(up[0:2, 0:2], np.zeros((2, 2)))
        np.testing.assert_array_equal(up[2:4, 2:4], np.full((2, 2), 3.0))

    def test_concat_channels(self):
        a, b = Tensor(np.zeros((2, 1, 3, 3))), Tensor(np.ones((2, 2, 3, 3)))
        self.assertEqual(concat([a, b]).shape, (2, 3, 3, 3))

    def test_softmax_rows_sum_to_one(self):
        probs = softmax(Tensor(np.random.default_rng(1).normal(size=(4, 3)))).data
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(4))

    def test_batchnorm_needs_two_samples(self):
        bn = BatchNorm2d(2)
        with self.assertRaises(BatchTooSmall):
            bn(Tensor(np.zeros((1, 2, 3, 3))))
        bn.eval()
        self.assertEqual(bn(Tensor(np.zeros((1, 2, 3, 3)))).shape, (1, 2, 3, 3))

    def test_batchnorm_running_stats(self):
        bn = BatchNorm2d(1)
        x = np.random.default_rng(2).normal(2.0, 3.0, size=(4, 1, 5, 5))
        bn(Tensor(x))
        self.assertAlmostEqual(bn.running_mean[0], 0.1 * x.mean(), places=12)
        self.assertAlmostEqual(bn.running_var[0], 0.9 + 0.1 * x.var(ddof=1), places=12)


class TestLosses(unittest.TestCase):
    def test_dice_loss_near_zero_for_confident_match(self):
        target = np.zeros((2, 1, 4, 4))
        target[:, :, 1:3, 1:3] = 1.0
        logits = Tensor(np.where(target > 0, 30.0, -30.0))
        self.assertLess(dice_loss(logits, target).item(), 1e-6)

    def test_dice_loss_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            dice_loss(Tensor(np.zeros((1, 1, 2, 2))), np.zeros((1, 1, 3, 3)))

    def test_cross_entropy_uniform(self):
        loss = cross_entropy(Tensor(np.zeros((2, 3))), [0, 2])
        self.assertAlmostEqual(loss.item(), np.log(3.0), places=12)

    def test_cross_entropy_label_range(self):
        with self.assertRaises(LabelOutOfRange):
            cross_entropy(Tensor(np.zeros((1, 3))), [3])


class TestModules(unittest.TestCase):
    def test_parameter_names_are_stable(self):
        block = DoubleConv(2, 4, np.random.default_rng(0))
        names = [name for name, _ in block.named_parameters()]
        self.assertEqual(names, ["first.conv.weight", "first.bn.gamma", "first.bn.beta",
                                 "second.conv.weight", "second.bn.gamma", "second.bn.beta"])
        buffers = [name for name, _ in block.named_buffers()]
        self.assertIn("first.bn.running_var", buffers)

    def test_state_dict_roundtrip(self):
        a = ConvBnRelu(2, 3, np.random.default_rng(0))
        b = ConvBnRelu(2, 3, np.random.default_rng(1))
        b.load_state_dict(a.state_dict())
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_state_dict_shape_mismatch(self):
        a = ConvBnRelu(2, 3, np.random.default_rng(0))
        b = ConvBnRelu(2, 4, np.random.default_rng(0))
        with self.assertRaises(ShapeMismatch):
            b.load_state_dict(a.state_dict())

    def test_train_eval_propagates(self):
        block = DoubleConv(1, 2, np.random.default_rng(0))
        block.eval()
        self.assertTrue(all(not m.training for m in block.modules()))
        block.train()
        self.assertTrue(all(m.training for m in block.modules()))


class TestAdam(unittest.TestCase):
    def test_first_step_moves_by_lr(self):
        p = parameter(np.array([1.0, -1.0]))
        state = AdamState.for_params([p], lr=0.1)
        adam_step([p], [np.array([0.5, -2.0])], state)
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-6)
        self.assertEqual(state.step, 1)

    def test_minimises_quadratic(self):
        layer = Linear(2, 1, np.random.default_rng(0))
        opt = Adam(layer.parameters(), lr=0.05)
        x = Tensor(np.array([[1.0, 2.0], [3.0, -1.0]]))
        target = np.array([[1.0], [0.0]])
        for _ in range(1000):
            opt.zero_grad()
            diff = layer(x) - target
            (diff * diff).mean().backward()
            opt.step()
        np.testing.assert_allclose(layer(x).data, target, atol=1e-2)

    def test_squared_norm_converges_to_origin(self):
        w = parameter(np.array([1.0, 1.0]))
        opt = Adam([w], lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            (w * w).sum().backward()
            opt.step()
        self.assertLess(np.linalg.norm(w.data), 1e-2)

    def test_missing_grad_counts_as_zero(self):
        p = parameter(np.array([1.0]))
        Adam([p], lr=0.1).step()
        self.assertEqual(p.data[0], 1.0)

    def test_length_mismatch(self):
        p = parameter(np.zeros(2))
        with self.assertRaises(ShapeMismatch):
            adam_step([p], [], AdamState.for_params([p], lr=0.1))


if __name__ == "__main__":
    unittest.main()
