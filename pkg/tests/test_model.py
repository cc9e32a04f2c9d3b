import unittest

import numpy as np

from src.autodiff import Tensor, cross_entropy, no_grad
from src.errors import ResolutionMismatch, ShapeMismatch
from src.model import Ablation, BsdaConfig, BsdaModel, forward_segmentor, fuse_and_classify
from src.model.training import joint_loss, seg_loss


def tiny_config(**overrides) -> BsdaConfig:
    values = dict(
        image_size=16,
        encoder_widths=[2, 4, 4, 4],
        decoder_width=8,
        classifier_widths=[2, 4, 4, 4],
        epochs=3,
        tau=1,
        batch_size=2,
    )
    values.update(overrides)
    return BsdaConfig(**values)


def random_batch(rng: np.random.Generator, n: int = 2, size: int = 16):
    images = rng.uniform(0.0, 1.0, size=(n, 1, size, size))
    mask = np.zeros((n, 1, size, size))
    mask[:, :, 4:12, 5:11] = 1.0
    g_bd = rng.uniform(0.0, 1.0, size=mask.shape)
    g_sd = rng.uniform(-1.0, 1.0, size=mask.shape)
    return images, mask, g_bd, g_sd


class TestConfig(unittest.TestCase):
    def test_defaults(self):
        config = BsdaConfig()
        self.assertEqual(config.decoder_widths, [32, 16, 8, 4])
        self.assertEqual((config.weight_cls, config.weight_dice, config.weight_boundary, config.weight_sdm), (1, 3, 1, 1))
        self.assertEqual((config.tau, config.epochs), (20, 200))

    def test_invalid(self):
        for bad in ({"tau": 5, "epochs": 5}, {"image_size": 20}, {"decoder_width": 12},
                    {"classifier_widths": [3, 4, 4, 4]}, {"encoder_widths": [2, 4]}, {"weight_dice": -1}):
            with self.assertRaises(ValueError, msg=str(bad)):
                tiny_config(**bad)

    def test_ablation_flags(self):
        self.assertFalse(Ablation.SINGLE_TASK.use_boundary)
        self.assertFalse(Ablation.SINGLE_TASK.use_classifier)
        self.assertTrue(Ablation.NO_FUSION.use_classifier)
        self.assertFalse(Ablation.NO_FUSION.use_fusion)
        self.assertFalse(Ablation.NO_CLS.use_fusion)
        for variant in (Ablation.NO_B, Ablation.NO_D):
            self.assertFalse(variant.use_classifier, variant)
            self.assertEqual(variant.fused_branches, ())
        self.assertEqual(Ablation.FULL.fused_branches, ("s", "b", "d"))
        self.assertEqual(Ablation.S_ONLY.fused_branches, ("s",))
        self.assertTrue(Ablation.S_ONLY.use_boundary and Ablation.S_ONLY.use_distance)

    def test_branch_ablations_drop_classifier(self):
        for variant in (Ablation.NO_B, Ablation.NO_D):
            model = BsdaModel(tiny_config(ablation=variant))
            self.assertIsNone(model.classifier, variant)
            self.assertEqual(model.classifier_parameters(), [])
            with self.assertRaises(ShapeMismatch):
                fuse_and_classify(model, Tensor(np.zeros((2, 1, 16, 16))), None)


class TestSegmentor(unittest.TestCase):
    def setUp(self):
        self.model = BsdaModel(tiny_config())
        self.rng = np.random.default_rng(0)

    def test_output_shapes(self):
        images, *_ = random_batch(self.rng)
        out = forward_segmentor(self.model, Tensor(images))
        for head in (out.p_s, out.p_b, out.p_d):
            self.assertEqual(head.shape, (2, 1, 16, 16))
        self.assertEqual(sorted(out.pyramids), ["b", "d", "s"])
        self.assertEqual([t.shape[2] for t in out.pyramids["s"]], [2, 4, 8, 16])
        self.assertEqual([t.shape[1] for t in out.pyramids["s"]], [8, 4, 2, 1])

    def test_default_size_shapes(self):
        model = BsdaModel(BsdaConfig())
        out = forward_segmentor(model, Tensor(np.zeros((2, 1, 64, 64))))
        self.assertEqual(out.p_s.shape, (2, 1, 64, 64))
        logits = fuse_and_classify(model, Tensor(np.zeros((2, 1, 64, 64))), out.pyramids)
        self.assertEqual(logits.shape, (2, 3))

    def test_zeroed_heads_give_zero_regressions(self):
        for decoder in (self.model.decoder_b, self.model.decoder_d):
            decoder.head.weight.data[...] = 0.0
            decoder.head.bias.data[...] = 0.0
        images, *_ = random_batch(self.rng)
        out = forward_segmentor(self.model, Tensor(images))
        self.assertFalse(out.p_b.data.any())
        self.assertFalse(out.p_d.data.any())

    def test_pixel_perturbation_changes_output(self):
        self.model.eval()
        images, *_ = random_batch(self.rng)
        with no_grad():
            before = forward_segmentor(self.model, Tensor(images)).p_s.data
            images[0, 0, 8, 8] += 0.5
            after = forward_segmentor(self.model, Tensor(images)).p_s.data
        self.assertGreater(np.abs(after - before).max(), 0.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            forward_segmentor(self.model, Tensor(np.zeros((2, 1, 32, 32))))
        with self.assertRaises(ShapeMismatch):
            forward_segmentor(self.model, Tensor(np.zeros((2, 3, 16, 16))))

    def test_boundary_coupling_channel_count(self):
        full = BsdaModel(tiny_config())
        no_b = BsdaModel(tiny_config(ablation=Ablation.NO_B))
        delta = full.decoder_s.last_stage_in_channels - no_b.decoder_s.last_stage_in_channels
        self.assertEqual(delta, full.decoder_b.penultimate_width)
        self.assertIsNone(no_b.decoder_b)

    def test_single_task_has_only_s(self):
        model = BsdaModel(tiny_config(ablation=Ablation.SINGLE_TASK))
        out = forward_segmentor(model, Tensor(np.zeros((2, 1, 16, 16))))
        self.assertIsNone(out.p_b)
        self.assertIsNone(out.p_d)
        self.assertEqual(model.branches, ["s"])
        self.assertEqual(model.classifier_parameters(), [])

    def test_same_seed_same_weights(self):
        a, b = BsdaModel(tiny_config(seed=3)), BsdaModel(tiny_config(seed=3))
        for key, value in a.state_dict().items():
            np.testing.assert_array_equal(value, b.state_dict()[key])


class TestClassifier(unittest.TestCase):
    def setUp(self):
        self.model = BsdaModel(tiny_config())
        self.rng = np.random.default_rng(1)

    def test_logits_shape(self):
        images, *_ = random_batch(self.rng, n=3)
        x = Tensor(images)
        logits = fuse_and_classify(self.model, x, forward_segmentor(self.model, x).pyramids)
        self.assertEqual(logits.shape, (3, 3))

    def test_zero_pyramids_match_unfused_path(self):
        self.model.eval()
        images, *_ = random_batch(self.rng)
        x = Tensor(images)
        with no_grad():
            pyramids = forward_segmentor(self.model, x).pyramids
            zeroed = {k: [Tensor(np.zeros(t.shape)) for t in v] for k, v in pyramids.items()}
            fused = fuse_and_classify(self.model, x, zeroed).data
            unfused = fuse_and_classify(self.model, x, None).data
        np.testing.assert_allclose(fused, unfused, atol=1e-12)

    def test_no_fusion_model_has_no_reducers(self):
        model = BsdaModel(tiny_config(ablation=Ablation.NO_FUSION))
        self.assertEqual(model.fusion_parameters(), [])
        x = Tensor(np.zeros((2, 1, 16, 16)))
        self.assertEqual(fuse_and_classify(model, x, forward_segmentor(model, x).pyramids).shape, (2, 3))

    def test_s_only_fuses_segmentation_features(self):
        full = BsdaModel(tiny_config())
        s_only = BsdaModel(tiny_config(ablation=Ablation.S_ONLY))
        self.assertIsNotNone(s_only.decoder_b)
        self.assertIsNotNone(s_only.decoder_d)
        full_in = [r.conv.in_channels for r in full.classifier.reducers]
        s_in = [r.conv.in_channels for r in s_only.classifier.reducers]
        self.assertEqual(full_in, [3 * c for c in s_in])
        x = Tensor(np.random.default_rng(2).uniform(size=(2, 1, 16, 16)))
        pyramids = forward_segmentor(s_only, x).pyramids
        pyramids["b"] = list(reversed(pyramids["b"]))
        self.assertEqual(fuse_and_classify(s_only, x, pyramids).shape, (2, 3))

    def test_resolution_mismatch(self):
        images, *_ = random_batch(self.rng)
        x = Tensor(images)
        pyramids = forward_segmentor(self.model, x).pyramids
        pyramids["b"] = list(reversed(pyramids["b"]))
        with self.assertRaises(ResolutionMismatch):
            fuse_and_classify(self.model, x, pyramids)

    def test_cross_entropy_reaches_decoders(self):
        images, *_ = random_batch(self.rng)
        x = Tensor(images)
        logits = fuse_and_classify(self.model, x, forward_segmentor(self.model, x).pyramids)
        cross_entropy(logits, [0, 2]).backward()
        for decoder in (self.model.decoder_s, self.model.decoder_b, self.model.decoder_d):
            norm = sum(float(np.abs(p.grad).sum()) for p in decoder.parameters() if p.grad is not None)
            self.assertGreater(norm, 0.0)


class TestEndToEndGradient(unittest.TestCase):
    def _total_loss(self, model, images, mask, g_bd, g_sd, labels):
        x = Tensor(images)
        out = forward_segmentor(model, x)
        terms = seg_loss(out.p_s, out.p_b, out.p_d, mask, g_bd, g_sd)
        l_cl = cross_entropy(fuse_and_classify(model, x, out.pyramids), labels)
        return joint_loss(terms.total, l_cl, 1.0, frozen=False)

    def test_directional_derivative_matches_finite_difference(self):
        model = BsdaModel(tiny_config())
        rng = np.random.default_rng(7)
        images, mask, g_bd, g_sd = random_batch(rng)
        labels = [1, 2]
        params = model.parameters()

        model.zero_grad()
        self._total_loss(model, images, mask, g_bd, g_sd, labels).backward()
        directions = [rng.normal(size=p.shape) for p in params]
        analytic = sum(float((p.grad * d).sum()) for p, d in zip(params, directions) if p.grad is not None)

        step = 1e-6
        with no_grad():
            for p, d in zip(params, directions):
                p.data += step * d
            plus = self._total_loss(model, images, mask, g_bd, g_sd, labels).item()
            for p, d in zip(params, directions):
                p.data -= 2 * step * d
            minus = self._total_loss(model, images, mask, g_bd, g_sd, labels).item()
            for p, d in zip(params, directions):
                p.data += step * d
        numeric = (plus - minus) / (2 * step)
        self.assertLess(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12), 1e-3)


if __name__ == "__main__":
    unittest.main()
