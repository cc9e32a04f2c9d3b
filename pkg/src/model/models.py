"""Pydantic models for network configuration and training records."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..autodiff.optim import AdamState
from ..heatmap import DEFAULT_FLOOR, DEFAULT_SIGMA, HeatmapParams

N_STAGES = 4


class Ablation(str, Enum):
    """Which parts of the network are built and trained."""

    FULL = "full"  # E + S + B + D + fused classifier
    NO_B = "no-b"  # E + S + D: no boundary branch, no coupling into S, no classifier
    NO_D = "no-d"  # E + S + B: no SDM branch, no classifier
    NO_CLS = "no-cls"  # segmentor only, all three branches
    SINGLE_TASK = "single-task"  # E + S baseline
    NO_FUSION = "no-fusion"  # classifier sees zero-padded fusion channels
    S_ONLY = "s-only"  # full segmentor, classifier fuses S features only

    @property
    def use_boundary(self) -> bool:
        return self not in (Ablation.NO_B, Ablation.SINGLE_TASK)

    @property
    def use_distance(self) -> bool:
        return self not in (Ablation.NO_D, Ablation.SINGLE_TASK)

    @property
    def use_classifier(self) -> bool:
        return self not in (Ablation.NO_B, Ablation.NO_D, Ablation.NO_CLS, Ablation.SINGLE_TASK)

    @property
    def use_fusion(self) -> bool:
        return self.use_classifier and self != Ablation.NO_FUSION

    @property
    def fused_branches(self) -> tuple[str, ...]:
        """Decoder branches whose stage outputs feed the classifier."""
        if not self.use_fusion:
            return ()
        if self == Ablation.S_ONLY:
            return ("s",)
        return tuple(b for b, present in (("s", True), ("b", self.use_boundary), ("d", self.use_distance)) if present)


class BsdaConfig(BaseModel):
    """Architecture, loss weights and schedule."""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(default=64, gt=0)
    encoder_widths: list[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    decoder_width: int = Field(default=32, gt=0, description="Width of the first decoder stage; halved per stage")
    classifier_widths: list[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    n_classes: int = Field(default=3, ge=2)

    # Loss weights: classification, Dice, boundary MSE, SDM MSE
    weight_cls: float = Field(default=1.0, ge=0)
    weight_dice: float = Field(default=3.0, ge=0)
    weight_boundary: float = Field(default=1.0, ge=0)
    weight_sdm: float = Field(default=1.0, ge=0)

    sigma: float = Field(default=DEFAULT_SIGMA, gt=0)
    heatmap_floor: float = Field(default=DEFAULT_FLOOR, ge=0)

    tau: int = Field(default=20, ge=0, description="Last epoch with the classifier frozen")
    epochs: int = Field(default=200, gt=0)
    lr_seg: float = Field(default=1e-4, gt=0)
    lr_cls: float = Field(default=2e-5, gt=0)
    batch_size: int = Field(default=8, ge=2)
    augment: bool = True
    ablation: Ablation = Ablation.FULL
    seed: int = 0

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.tau >= self.epochs:
            raise ValueError(f"tau ({self.tau}) must be < epochs ({self.epochs})")
        for name in ("encoder_widths", "classifier_widths"):
            widths = getattr(self, name)
            if len(widths) != N_STAGES or any(w <= 0 for w in widths):
                raise ValueError(f"{name} must hold {N_STAGES} positive widths, got {widths}")
        if any(w % 2 for w in self.classifier_widths):
            raise ValueError("classifier_widths must be even (fusion reduces to half width)")
        if self.decoder_width % 2 ** (N_STAGES - 1):
            raise ValueError(f"decoder_width must stay integral over {N_STAGES} halvings")
        if self.image_size % 2 ** N_STAGES:
            raise ValueError(f"image_size must be divisible by {2 ** N_STAGES}")
        return self

    @property
    def decoder_widths(self) -> list[int]:
        return [self.decoder_width // 2 ** j for j in range(N_STAGES)]

    def heatmap_params(self) -> HeatmapParams:
        return HeatmapParams(sigma=self.sigma, floor=self.heatmap_floor)


class EpochRecord(BaseModel):
    """One row of history.csv. Loss terms are unweighted epoch means."""

    epoch: int
    l_seg: float
    l_dice: float
    l_bd: float
    l_sd: float
    l_cl: float
    frozen: bool


HISTORY_COLUMNS = ["epoch", "l_seg", "l_dice", "l_bd", "l_sd", "l_cl", "frozen"]


@dataclass
class TrainState:
    """Mutable state of a training run."""

    seg_optimizer: AdamState
    cls_optimizer: AdamState | None
    rng: np.random.Generator
    epoch: int = 0
    classifier_frozen: bool = True
    history: list[EpochRecord] = field(default_factory=list)
