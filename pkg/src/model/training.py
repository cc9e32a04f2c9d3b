"""
Segmentation objective, augmentation and the two-phase training loop.

Schedule:
- epochs 1..tau: only the segmentation objective is optimised; the classifier
  (fusion reducers included) is never run, so its parameters and batch-norm
  buffers stay bitwise constant
- epochs tau+1..: joint objective L_seg + weight_cls * L_cl; cross-entropy
  gradients also reach the decoders through the fused features

Segmentor and classifier have separate Adam states with their own rates.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..autodiff.losses import cross_entropy, dice_loss, mse_loss
from ..autodiff.optim import Adam
from ..autodiff.tensor import Tensor
from ..dataset import SegDataset
from ..errors import ConfigInvalid, DataEmpty
from .evaluation import evaluate
from .models import HISTORY_COLUMNS, BsdaConfig, EpochRecord, TrainState
from .network import BsdaModel, forward_segmentor, fuse_and_classify

logger = logging.getLogger(__name__)

CONTRAST_RANGE = (0.8, 1.2)
MAX_NOISE_SIGMA = 0.05
BLUR_PROBABILITY = 0.2


# ============================================================================
# Losses
# ============================================================================


@dataclass
class SegLossTerms:
    """Weighted total plus the unweighted per-term values (0 for absent branches)."""

    total: Tensor
    dice: float
    boundary: float
    sdm: float


def seg_loss(p_s: Tensor, p_b: Tensor | None, p_d: Tensor | None, mask, g_bd, g_sd,
             weight_dice: float = 3.0, weight_boundary: float = 1.0, weight_sdm: float = 1.0) -> SegLossTerms:
    """weight_dice * Dice(sigmoid(p_s), mask) + weight_boundary * MSE(p_b, g_bd) + weight_sdm * MSE(p_d, g_sd)."""
    l_dice = dice_loss(p_s, mask)
    total = l_dice * weight_dice
    l_bd = l_sd = 0.0
    if p_b is not None:
        bd = mse_loss(p_b, g_bd)
        total = total + bd * weight_boundary
        l_bd = bd.item()
    if p_d is not None:
        sd = mse_loss(p_d, g_sd)
        total = total + sd * weight_sdm
        l_sd = sd.item()
    return SegLossTerms(total=total, dice=l_dice.item(), boundary=l_bd, sdm=l_sd)


def joint_loss(seg_total: Tensor, l_cl: Tensor | None, weight_cls: float, frozen: bool) -> Tensor:
    if frozen or l_cl is None:
        return seg_total
    return seg_total + l_cl * weight_cls


# ============================================================================
# Augmentation
# ============================================================================


@dataclass(frozen=True)
class GeometricTransform:
    """k quarter turns counter-clockwise, then optional flips."""

    quarter_turns: int = 0
    flip_horizontal: bool = False
    flip_vertical: bool = False

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "GeometricTransform":
        return cls(
            quarter_turns=int(rng.integers(0, 4)),
            flip_horizontal=bool(rng.random() < 0.5),
            flip_vertical=bool(rng.random() < 0.5),
        )

    def apply(self, array: np.ndarray) -> np.ndarray:
        out = np.rot90(array, self.quarter_turns, axes=(-2, -1))
        if self.flip_horizontal:
            out = out[..., :, ::-1]
        if self.flip_vertical:
            out = out[..., ::-1, :]
        return np.ascontiguousarray(out)


def photometric(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Contrast about the mean, additive Gaussian noise, occasional 3x3 box blur; clipped to [0, 1]."""
    contrast = rng.uniform(*CONTRAST_RANGE)
    mean = image.mean()
    out = mean + contrast * (image - mean)
    sigma = rng.uniform(0.0, MAX_NOISE_SIGMA)
    out = out + rng.normal(0.0, 1.0, size=image.shape) * sigma
    if rng.random() < BLUR_PROBABILITY:
        out = ndimage.uniform_filter(out, size=3, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def augment_sample(image: np.ndarray, mask: np.ndarray, targets: Sequence[np.ndarray],
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Same geometric transform for image, mask and targets; photometric changes on the image only."""
    transform = GeometricTransform.draw(rng)
    image = photometric(transform.apply(image), rng)
    return image, transform.apply(mask), [transform.apply(t) for t in targets]


def augment(image: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    image, mask, _ = augment_sample(image, mask, [], rng)
    return image, mask


# ============================================================================
# Training loop
# ============================================================================


def _validate(model: BsdaModel, dataset: SegDataset, config: BsdaConfig) -> None:
    if len(dataset) < 2:
        raise DataEmpty(f"Training needs at least 2 samples, got {len(dataset)}")
    if dataset.image_size != config.image_size or dataset.images.shape[2] != config.image_size:
        raise ConfigInvalid(f"Dataset images are {dataset.images.shape[1:]}, config expects {config.image_size}")
    if dataset.labels.min() < 0 or dataset.labels.max() >= config.n_classes:
        raise ConfigInvalid(f"Labels span {dataset.labels.min()}..{dataset.labels.max()}, n_classes={config.n_classes}")
    if model.config != config:
        raise ConfigInvalid("Model was built from a different config")


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    # batch norm needs two samples per batch in training mode
    return [b for b in (order[i:i + batch_size] for i in range(0, order.size, batch_size)) if b.size >= 2]


def _stack(arrays: list[np.ndarray]) -> np.ndarray:
    return np.stack(arrays).astype(np.float64)[:, None]


def _make_batch(dataset: SegDataset, idx: np.ndarray, augment_on: bool, rng: np.random.Generator):
    images, masks, bds, sds = [], [], [], []
    for i in idx:
        image, mask, g_bd, g_sd = dataset.images[i], dataset.masks[i], dataset.g_bd[i], dataset.g_sd[i]
        if augment_on:
            image, mask, (g_bd, g_sd) = augment_sample(image, mask, [g_bd, g_sd], rng)
        images.append(image)
        masks.append(mask)
        bds.append(g_bd)
        sds.append(g_sd)
    return Tensor(_stack(images)), _stack(masks), _stack(bds), _stack(sds), dataset.labels[idx]


def new_train_state(model: BsdaModel, config: BsdaConfig) -> tuple[TrainState, Adam, Adam | None]:
    seg_opt = Adam(model.segmentor_parameters(), lr=config.lr_seg)
    cls_opt = Adam(model.classifier_parameters(), lr=config.lr_cls) if model.classifier is not None else None
    state = TrainState(
        seg_optimizer=seg_opt.state,
        cls_optimizer=cls_opt.state if cls_opt is not None else None,
        rng=np.random.default_rng([config.seed, 1]),
    )
    return state, seg_opt, cls_opt


def train_epoch(model: BsdaModel, dataset: SegDataset, config: BsdaConfig, state: TrainState,
                seg_opt: Adam, cls_opt: Adam | None) -> EpochRecord:
    state.epoch += 1
    frozen = state.epoch <= config.tau
    if state.classifier_frozen and not frozen and model.classifier is not None:
        logger.info(f"Epoch {state.epoch}: unfreezing classifier, joint objective from here on")
    state.classifier_frozen = frozen

    model.train()
    sums = {"l_seg": 0.0, "l_dice": 0.0, "l_bd": 0.0, "l_sd": 0.0, "l_cl": 0.0}
    batches = _batches(state.rng.permutation(len(dataset)), config.batch_size)
    if not batches:
        raise DataEmpty("No batch of at least 2 samples could be formed")

    for idx in batches:
        images, masks, g_bd, g_sd, labels = _make_batch(dataset, idx, config.augment, state.rng)
        out = forward_segmentor(model, images)
        terms = seg_loss(out.p_s, out.p_b, out.p_d, masks, g_bd, g_sd,
                         config.weight_dice, config.weight_boundary, config.weight_sdm)
        l_cl = None
        if model.classifier is not None and not frozen:
            logits = fuse_and_classify(model, images, out.pyramids)
            l_cl = cross_entropy(logits, labels)
        total = joint_loss(terms.total, l_cl, config.weight_cls, frozen)

        seg_opt.zero_grad()
        if cls_opt is not None:
            cls_opt.zero_grad()
        total.backward()
        seg_opt.step()
        if cls_opt is not None and not frozen:
            cls_opt.step()

        sums["l_seg"] += terms.total.item()
        sums["l_dice"] += terms.dice
        sums["l_bd"] += terms.boundary
        sums["l_sd"] += terms.sdm
        sums["l_cl"] += l_cl.item() if l_cl is not None else 0.0

    means = {k: v / len(batches) for k, v in sums.items()}
    record = EpochRecord(epoch=state.epoch, frozen=frozen, **means)
    state.history.append(record)
    logger.info(
        f"Epoch {record.epoch}/{config.epochs}: l_seg={record.l_seg:.4f} dice={record.l_dice:.4f} "
        f"bd={record.l_bd:.4f} sd={record.l_sd:.4f} cl={record.l_cl:.4f} frozen={record.frozen}"
    )
    return record


def train(model: BsdaModel, dataset: SegDataset, config: BsdaConfig,
          val_dataset: SegDataset | None = None) -> tuple[BsdaModel, list[EpochRecord]]:
    """Run config.epochs epochs in place on `model`; returns it with the per-epoch history."""
    _validate(model, dataset, config)
    state, seg_opt, cls_opt = new_train_state(model, config)
    logger.info(
        f"Training {config.ablation.value} model on {len(dataset)} samples for {config.epochs} epochs "
        f"(classifier frozen through epoch {config.tau})"
    )
    for _ in range(config.epochs):
        train_epoch(model, dataset, config, state, seg_opt, cls_opt)

    if val_dataset is not None and len(val_dataset):
        result = evaluate(model, val_dataset)
        accuracy = f"{result.report.accuracy:.2f}%" if result.report is not None else "n/a"
        logger.info(f"Validation: dice={result.summary.mean.dice:.2f} accuracy={accuracy}")
    return model, state.history


def write_history(path: Path, history: Sequence[EpochRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in history:
            writer.writerow([r.epoch, f"{r.l_seg:.6f}", f"{r.l_dice:.6f}", f"{r.l_bd:.6f}",
                             f"{r.l_sd:.6f}", f"{r.l_cl:.6f}", int(r.frozen)])
