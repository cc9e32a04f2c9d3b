import csv
import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.autodiff import Tensor, dice_loss, mse_loss
from src.dataset import SegDataset, mask_targets
from src.errors import ConfigInvalid, DataEmpty, ShapeMismatch
from src.heatmap import HeatmapParams
from src.maskops import BinaryMask
from src.model import (
    Ablation,
    BsdaConfig,
    BsdaModel,
    HISTORY_COLUMNS,
    augment,
    joint_loss,
    load_checkpoint,
    save_checkpoint,
    score_predictions,
    seg_loss,
    train,
    write_history,
)
from src.model.checkpoint import config_path_for
from src.model.training import GeometricTransform, augment_sample, new_train_state, train_epoch


def tiny_config(**overrides) -> BsdaConfig:
    values = dict(
        image_size=16,
        encoder_widths=[2, 4, 4, 4],
        decoder_width=8,
        classifier_widths=[2, 4, 4, 4],
        epochs=3,
        tau=1,
        batch_size=3,
        augment=False,
    )
    values.update(overrides)
    return BsdaConfig(**values)


def square_dataset(n: int = 6, size: int = 16) -> SegDataset:
    images, masks, labels = [], [], []
    for i in range(n):
        side = 3 + 2 * (i % 3)
        top = 2 + i % 4
        mask = np.zeros((size, size), dtype=bool)
        mask[top:top + side, top:top + side] = True
        images.append(np.where(mask, 0.2, 0.8))
        masks.append(mask)
        labels.append(i % 3)
    return SegDataset.from_arrays([f"{i:05d}" for i in range(n)], np.stack(images), np.stack(masks), labels)


def checksum(params) -> list[bytes]:
    return [p.data.tobytes() for p in params]


class TestSegLoss(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.shape = (2, 1, 8, 8)
        self.mask = (rng.random(self.shape) < 0.4).astype(np.float64)
        self.g_bd = rng.uniform(0.0, 1.0, self.shape)
        self.g_sd = rng.uniform(-1.0, 1.0, self.shape)
        self.p_s = Tensor(rng.normal(size=self.shape))
        self.p_b = Tensor(rng.normal(size=self.shape))
        self.p_d = Tensor(rng.normal(size=self.shape))

    def test_zero_regression_weights_leave_dice_only(self):
        terms = seg_loss(self.p_s, self.p_b, self.p_d, self.mask, self.g_bd, self.g_sd,
                         weight_dice=3.0, weight_boundary=0.0, weight_sdm=0.0)
        self.assertAlmostEqual(terms.total.item(), 3.0 * dice_loss(self.p_s, self.mask).item(), places=12)

    def test_weighted_sum_of_terms(self):
        terms = seg_loss(self.p_s, self.p_b, self.p_d, self.mask, self.g_bd, self.g_sd)
        a = dice_loss(self.p_s, self.mask).item()
        b = mse_loss(self.p_b, self.g_bd).item()
        c = mse_loss(self.p_d, self.g_sd).item()
        self.assertAlmostEqual(terms.total.item(), 3 * a + b + c, places=12)
        self.assertEqual((terms.dice, terms.boundary, terms.sdm), (a, b, c))

    def test_perfect_predictions(self):
        logits = Tensor(np.where(self.mask > 0, 20.0, -20.0))
        terms = seg_loss(logits, Tensor(self.g_bd), Tensor(self.g_sd), self.mask, self.g_bd, self.g_sd)
        self.assertLess(terms.total.item(), 3.0 * 1e-3)
        self.assertEqual(terms.boundary, 0.0)
        self.assertEqual(terms.sdm, 0.0)

    def test_absent_branches_contribute_zero(self):
        terms = seg_loss(self.p_s, None, None, self.mask, self.g_bd, self.g_sd)
        self.assertEqual((terms.boundary, terms.sdm), (0.0, 0.0))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeMismatch):
            seg_loss(self.p_s, self.p_b, self.p_d, self.mask, self.g_bd[:, :, :4], self.g_sd)

    def test_joint_loss(self):
        seg = Tensor(np.asarray(1.25))
        cl = Tensor(np.asarray(0.5))
        self.assertEqual(joint_loss(seg, cl, 2.0, frozen=True).item(), 1.25)
        self.assertAlmostEqual(joint_loss(seg, cl, 2.0, frozen=False).item(), 2.25, delta=1e-12)
        self.assertEqual(joint_loss(seg, None, 2.0, frozen=False).item(), 1.25)


class TestAugment(unittest.TestCase):
    def test_four_quarter_turns_are_identity(self):
        array = np.arange(12.0).reshape(3, 4)
        turn = GeometricTransform(quarter_turns=1)
        out = array
        for _ in range(4):
            out = turn.apply(out)
        np.testing.assert_array_equal(out, array)

    def test_mask_stays_binary_and_image_in_range(self):
        rng = np.random.default_rng(1)
        dataset = square_dataset()
        for i in range(len(dataset)):
            for _ in range(10):
                image, mask = augment(dataset.images[i], dataset.masks[i], rng)
                self.assertEqual(mask.dtype, bool)
                self.assertEqual(int(mask.sum()), int(dataset.masks[i].sum()))
                self.assertGreaterEqual(image.min(), 0.0)
                self.assertLessEqual(image.max(), 1.0)

    def test_transformed_targets_match_recomputed(self):
        params = HeatmapParams()
        rng = np.random.default_rng(2)
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:9, 4:13] = True
        mask[9:12, 4:7] = True
        g_bd, g_sd = mask_targets(BinaryMask(mask), params)
        for turns in range(4):
            for flip_h in (False, True):
                for flip_v in (False, True):
                    t = GeometricTransform(turns, flip_h, flip_v)
                    bd_new, sd_new = mask_targets(BinaryMask(t.apply(mask)), params)
                    np.testing.assert_allclose(t.apply(g_bd), bd_new, atol=1e-9)
                    np.testing.assert_allclose(t.apply(g_sd), sd_new, atol=1e-9)
        image = rng.uniform(size=(16, 16))
        _, out_mask, (out_bd, out_sd) = augment_sample(image, mask, [g_bd, g_sd], rng)
        bd_new, sd_new = mask_targets(BinaryMask(out_mask), params)
        np.testing.assert_allclose(out_bd, bd_new, atol=1e-9)
        np.testing.assert_allclose(out_sd, sd_new, atol=1e-9)


class TestTraining(unittest.TestCase):
    def setUp(self):
        self.dataset = square_dataset()

    def test_classifier_frozen_through_tau(self):
        config = tiny_config(epochs=4, tau=2)
        model = BsdaModel(config)
        state, seg_opt, cls_opt = new_train_state(model, config)
        initial_cls = checksum(model.classifier_parameters())
        initial_buffers = {k: v.copy() for k, v in model.classifier.named_buffers()}
        initial_seg = checksum(model.segmentor_parameters())

        for _ in range(2):
            record = train_epoch(model, self.dataset, config, state, seg_opt, cls_opt)
            self.assertTrue(record.frozen)
            self.assertEqual(record.l_cl, 0.0)
            self.assertEqual(checksum(model.classifier_parameters()), initial_cls)
            for key, value in model.classifier.named_buffers():
                np.testing.assert_array_equal(value, initial_buffers[key])
        self.assertNotEqual(checksum(model.segmentor_parameters()), initial_seg)

        record = train_epoch(model, self.dataset, config, state, seg_opt, cls_opt)
        self.assertFalse(record.frozen)
        self.assertFalse(state.classifier_frozen)
        self.assertGreater(record.l_cl, 0.0)
        self.assertNotEqual(checksum(model.classifier_parameters()), initial_cls)
        self.assertEqual(len(state.history), 3)

    def test_segmentation_loss_decreases(self):
        config = tiny_config(epochs=12, tau=11, lr_seg=5e-3)
        _, history = train(BsdaModel(config), self.dataset, config)
        self.assertEqual([r.epoch for r in history], list(range(1, 13)))
        self.assertLess(history[-1].l_seg, history[0].l_seg)

    def test_same_seed_same_weights(self):
        config = tiny_config(augment=True)
        first, _ = train(BsdaModel(config), self.dataset, config)
        second, _ = train(BsdaModel(config), self.dataset, config)
        for key, value in first.state_dict().items():
            np.testing.assert_array_equal(value, second.state_dict()[key])

    def test_single_task_logs_zero_regression_terms(self):
        config = tiny_config(ablation=Ablation.SINGLE_TASK)
        _, history = train(BsdaModel(config), self.dataset, config)
        for record in history:
            self.assertEqual((record.l_bd, record.l_sd, record.l_cl), (0.0, 0.0, 0.0))

    def test_branch_ablations_train_without_classifier(self):
        for variant in (Ablation.NO_B, Ablation.NO_D):
            config = tiny_config(ablation=variant)
            model = BsdaModel(config)
            state, _, cls_opt = new_train_state(model, config)
            self.assertIsNone(cls_opt)
            self.assertIsNone(state.cls_optimizer)
            model, history = train(model, self.dataset, config)
            self.assertIsNone(model.classifier)
            self.assertEqual([r.l_cl for r in history], [0.0] * config.epochs)

    def test_rejects_bad_inputs(self):
        config = tiny_config()
        with self.assertRaises(DataEmpty):
            train(BsdaModel(config), self.dataset.subset([0]), config)
        with self.assertRaises(ConfigInvalid):
            train(BsdaModel(tiny_config(image_size=32)), self.dataset, tiny_config(image_size=32))
        with self.assertRaises(ConfigInvalid):
            train(BsdaModel(config), self.dataset, tiny_config(seed=5))


class TestEvaluationAndCheckpoints(unittest.TestCase):
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.dataset = square_dataset()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_oracle_predictions_score_perfectly(self):
        result = score_predictions(self.dataset.ids, self.dataset.masks, self.dataset.masks,
                                   self.dataset.labels, self.dataset.labels, self.dataset.class_names)
        self.assertEqual(result.summary.mean.dice, 100.0)
        self.assertEqual(result.summary.mean.hd95, 0.0)
        self.assertEqual(result.report.accuracy, 100.0)

    def test_history_csv(self):
        config = tiny_config()
        _, history = train(BsdaModel(config), self.dataset, config)
        write_history(self.tmp / "history.csv", history)
        with (self.tmp / "history.csv").open(encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(rows[0], HISTORY_COLUMNS)
        self.assertEqual([row[-1] for row in rows[1:]], ["1", "0", "0"])

    def test_checkpoint_roundtrip(self):
        config = tiny_config()
        model, _ = train(BsdaModel(config), self.dataset, config)
        path = self.tmp / "model.bsdc"
        save_checkpoint(model, path)
        self.assertTrue(config_path_for(path).exists())
        restored = load_checkpoint(path)
        self.assertEqual(restored.config, config)
        for key, value in model.state_dict().items():
            np.testing.assert_array_equal(value, restored.state_dict()[key])

    def test_checkpoint_architecture_mismatch(self):
        path = self.tmp / "model.bsdc"
        save_checkpoint(BsdaModel(tiny_config()), path)
        with self.assertRaises(ShapeMismatch):
            load_checkpoint(path, tiny_config(ablation=Ablation.NO_B))

    def test_checkpoint_without_sidecar(self):
        path = self.tmp / "model.bsdc"
        save_checkpoint(BsdaModel(tiny_config()), path)
        config_path_for(path).unlink()
        with self.assertRaises(ConfigInvalid):
            load_checkpoint(path)


if __name__ == "__main__":
    unittest.main()
