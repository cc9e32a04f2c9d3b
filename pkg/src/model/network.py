"""
The segmentor (shared encoder + S/B/D decoders) and the fused classifier.

Resolutions for a 64 px input:
- encoder skips at 64, 32, 16, 8; bottleneck at 4
- each decoder stage upsamples x2, concatenates the encoder skip and applies
  two 3x3 conv-BN-ReLU layers: outputs at 8, 16, 32, 64
- B's penultimate stage output (32 px) is concatenated onto S's penultimate
  output before S's last stage
- classifier stage k runs at 64 / 2^k, fuses the decoder features of that
  resolution (S, B and D, or S alone for s-only) through a 1x1 conv-BN-ReLU
  down to half the stage width, then max-pools,
  so stage outputs land at 1/2, 1/4, 1/8, 1/16
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.layers import Conv2d, ConvBnRelu, DoubleConv, Linear, Module
from ..autodiff.tensor import Tensor
from ..errors import ResolutionMismatch, ShapeMismatch
from .models import N_STAGES, BsdaConfig

logger = logging.getLogger(__name__)

BRANCHES = ("s", "b", "d")


class Encoder(Module):
    def __init__(self, widths: list[int], rng: np.random.Generator):
        self.stem = ConvBnRelu(1, widths[0], rng)
        self.stages = []
        in_channels = widths[0]
        for width in widths:
            self.stages.append(DoubleConv(in_channels, width, rng))
            in_channels = width

    def forward(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Returns the bottleneck and the pre-pool skips, finest first."""
        x = self.stem(x)
        skips = []
        for stage in self.stages:
            x = stage(x)
            skips.append(x)
            x = ops.maxpool2x(x)
        return x, skips


class Decoder(Module):
    """Upsample, concat skip, double conv; 1x1 linear head on the last stage."""

    def __init__(self, encoder_widths: list[int], widths: list[int], rng: np.random.Generator, coupled_channels: int = 0):
        self.stages = []
        in_channels = encoder_widths[-1]
        for j, width in enumerate(widths):
            extra = coupled_channels if j == N_STAGES - 1 else 0
            skip_channels = encoder_widths[N_STAGES - 1 - j]
            self.stages.append(DoubleConv(in_channels + extra + skip_channels, width, rng))
            in_channels = width
        self.head = Conv2d(widths[-1], 1, 1, rng)

    @property
    def penultimate_width(self) -> int:
        return self.stages[-2].out_channels

    @property
    def last_stage_in_channels(self) -> int:
        return self.stages[-1].in_channels

    def forward(self, bottleneck: Tensor, skips: list[Tensor], coupled: Tensor | None = None) -> tuple[Tensor, list[Tensor]]:
        x = bottleneck
        outputs = []
        for j, stage in enumerate(self.stages):
            if j == N_STAGES - 1 and coupled is not None:
                x = ops.concat([x, coupled], axis=1)
            x = ops.upsample_nearest2x(x)
            x = ops.concat([x, skips[N_STAGES - 1 - j]], axis=1)
            x = stage(x)
            outputs.append(x)
        return self.head(x), outputs


class Classifier(Module):
    """Conv stages with per-stage fusion reducers, then GAP and a linear head."""

    def __init__(self, widths: list[int], fused_channels: list[int], n_classes: int, rng: np.random.Generator, use_fusion: bool):
        self.stages = []
        self.reducers = []
        in_channels = 1
        for k, width in enumerate(widths):
            self.stages.append(DoubleConv(in_channels, width, rng))
            if use_fusion:
                self.reducers.append(ConvBnRelu(fused_channels[k], width // 2, rng, kernel_size=1))
            in_channels = width + width // 2
        self.widths = list(widths)
        self.fc = Linear(in_channels, n_classes, rng)

    def forward(self, images: Tensor, fused: list[Tensor | None]) -> Tensor:
        x = images
        for k, stage in enumerate(self.stages):
            x = stage(x)
            if fused[k] is None:
                n, _, h, w = x.shape
                reduced = Tensor(np.zeros((n, self.widths[k] // 2, h, w)))
            else:
                if fused[k].shape[2:] != x.shape[2:]:
                    raise ResolutionMismatch(
                        f"Classifier stage {k} runs at {x.shape[2:]}, fused features are {fused[k].shape[2:]}"
                    )
                reduced = self.reducers[k](fused[k])
            x = ops.maxpool2x(ops.concat([x, reduced], axis=1))
        return self.fc(ops.global_avg_pool(x))


class BsdaModel(Module):
    """Parameter collection for E, S/B/D and the fused classifier C."""

    def __init__(self, config: BsdaConfig):
        self.config = config
        ablation = config.ablation
        rng = np.random.default_rng([config.seed, 0])
        dec_widths = config.decoder_widths

        self.encoder = Encoder(config.encoder_widths, rng)
        self.decoder_b = Decoder(config.encoder_widths, dec_widths, rng) if ablation.use_boundary else None
        self.decoder_d = Decoder(config.encoder_widths, dec_widths, rng) if ablation.use_distance else None
        coupled = self.decoder_b.penultimate_width if self.decoder_b is not None else 0
        self.decoder_s = Decoder(config.encoder_widths, dec_widths, rng, coupled_channels=coupled)

        self.classifier = None
        if ablation.use_classifier:
            n_branches = max(len(ablation.fused_branches), 1)
            # classifier stage k pairs with decoder stage N_STAGES - 1 - k
            fused = [n_branches * dec_widths[N_STAGES - 1 - k] for k in range(N_STAGES)]
            self.classifier = Classifier(
                config.classifier_widths, fused, config.n_classes, rng, use_fusion=ablation.use_fusion
            )

    @property
    def branches(self) -> list[str]:
        present = {"s": True, "b": self.decoder_b is not None, "d": self.decoder_d is not None}
        return [b for b in BRANCHES if present[b]]

    def segmentor_parameters(self) -> list[Tensor]:
        params = self.encoder.parameters()
        for decoder in (self.decoder_s, self.decoder_b, self.decoder_d):
            if decoder is not None:
                params.extend(decoder.parameters())
        return params

    def classifier_parameters(self) -> list[Tensor]:
        return self.classifier.parameters() if self.classifier is not None else []

    def fusion_parameters(self) -> list[Tensor]:
        if self.classifier is None:
            return []
        return [p for reducer in self.classifier.reducers for p in reducer.parameters()]


@dataclass
class SegmentorOutput:
    """Logits of S, raw regressions of B and D, and per-branch decoder stage outputs."""

    p_s: Tensor
    p_b: Tensor | None
    p_d: Tensor | None
    pyramids: dict[str, list[Tensor]]


def forward_segmentor(model: BsdaModel, images: Tensor) -> SegmentorOutput:
    size = model.config.image_size
    if images.ndim != 4 or images.shape[1] != 1 or images.shape[2:] != (size, size):
        raise ShapeMismatch(f"Expected images of shape (N, 1, {size}, {size}), got {images.shape}")

    bottleneck, skips = model.encoder(images)
    pyramids: dict[str, list[Tensor]] = {}
    p_b = p_d = None
    coupled = None
    if model.decoder_b is not None:
        p_b, pyramids["b"] = model.decoder_b(bottleneck, skips)
        coupled = pyramids["b"][N_STAGES - 2]
    if model.decoder_d is not None:
        p_d, pyramids["d"] = model.decoder_d(bottleneck, skips)
    p_s, pyramids["s"] = model.decoder_s(bottleneck, skips, coupled=coupled)
    return SegmentorOutput(p_s=p_s, p_b=p_b, p_d=p_d, pyramids=pyramids)


def fuse_and_classify(model: BsdaModel, images: Tensor, pyramids: dict[str, list[Tensor]] | None) -> Tensor:
    """Class logits. pyramids=None (or a no-fusion model) feeds zero fusion channels."""
    if model.classifier is None:
        raise ShapeMismatch("This model was built without a classifier")
    if pyramids is None or not model.classifier.reducers:
        fused: list[Tensor | None] = [None] * N_STAGES
    else:
        fused = []
        for k in range(N_STAGES):
            level = [pyramids[b][N_STAGES - 1 - k] for b in model.config.ablation.fused_branches]
            shapes = {t.shape[2:] for t in level}
            if len(shapes) != 1:
                raise ResolutionMismatch(f"Branch features disagree at classifier stage {k}: {sorted(shapes)}")
            fused.append(ops.concat(level, axis=1))
    return model.classifier(images, fused)
