"""In-memory training data: images, masks, labels and their regression targets."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .disttrans import normalized_sdm
from .errors import DataEmpty, DimMismatch
from .formats import read_bsdt, read_image, read_mask
from .heatmap import HeatmapParams, boundary_heatmap
from .maskops import BinaryMask
from .synth import CLASS_NAMES, read_manifest

logger = logging.getLogger(__name__)


def mask_targets(mask: BinaryMask, params: HeatmapParams) -> tuple[np.ndarray, np.ndarray]:
    """(G_bd^n, G_sd^n) arrays for one mask."""
    return boundary_heatmap(mask, params).values, normalized_sdm(mask).values


@dataclass
class SegDataset:
    """Arrays are (N, H, W); labels are class indices."""

    ids: list[str]
    images: np.ndarray
    masks: np.ndarray
    labels: np.ndarray
    g_bd: np.ndarray
    g_sd: np.ndarray
    class_names: list[str] = field(default_factory=lambda: list(CLASS_NAMES))

    def __post_init__(self):
        n = len(self.ids)
        for name in ("images", "masks", "g_bd", "g_sd"):
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[0] != n:
                raise DimMismatch(f"{name} has shape {arr.shape}, expected ({n}, H, W)")
        if self.labels.shape != (n,):
            raise DimMismatch(f"labels has shape {self.labels.shape}, expected ({n},)")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def image_size(self) -> int:
        return int(self.images.shape[1])

    @classmethod
    def from_arrays(cls, ids: Sequence[str], images: np.ndarray, masks: np.ndarray, labels: Sequence[int],
                    params: HeatmapParams | None = None) -> "SegDataset":
        """Compute both regression targets from the masks."""
        params = params or HeatmapParams()
        masks = np.asarray(masks, dtype=bool)
        targets = [mask_targets(BinaryMask(m), params) for m in masks]
        return cls(
            ids=list(ids),
            images=np.asarray(images, dtype=np.float64),
            masks=masks,
            labels=np.asarray(labels, dtype=np.int64),
            g_bd=np.stack([t[0] for t in targets]) if targets else np.zeros((0,) + masks.shape[1:]),
            g_sd=np.stack([t[1] for t in targets]) if targets else np.zeros((0,) + masks.shape[1:]),
        )

    def subset(self, indices: Sequence[int]) -> "SegDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return SegDataset(
            ids=[self.ids[i] for i in idx],
            images=self.images[idx],
            masks=self.masks[idx],
            labels=self.labels[idx],
            g_bd=self.g_bd[idx],
            g_sd=self.g_sd[idx],
            class_names=list(self.class_names),
        )


def load_dataset(data_dir: Path, split: str | None, params: HeatmapParams | None = None,
                 targets_dir: Path | None = None) -> SegDataset:
    """Read one split (or everything when split is None) listed in manifest.csv.

    Targets come from `<id>.bd.bsdt` / `<id>.sdm.bsdt` in targets_dir when
    both files exist, otherwise they are computed from the mask.
    """
    data_dir = Path(data_dir)
    params = params or HeatmapParams()
    rows = [r for r in read_manifest(data_dir / "manifest.csv") if split is None or r.split == split]
    if not rows:
        raise DataEmpty(f"No samples for split '{split}' in {data_dir}")

    images, masks, bds, sds = [], [], [], []
    cached = 0
    for row in rows:
        image = read_image(data_dir / "images" / f"{row.id}.pgm")
        mask = read_mask(data_dir / "masks" / f"{row.id}.pgm")
        if image.shape != mask.dims:
            raise DimMismatch(f"Sample {row.id}: image {image.shape} vs mask {mask.dims}")
        bd_path = Path(targets_dir) / f"{row.id}.bd.bsdt" if targets_dir else None
        sd_path = Path(targets_dir) / f"{row.id}.sdm.bsdt" if targets_dir else None
        if bd_path is not None and bd_path.exists() and sd_path.exists():
            g_bd, g_sd = read_bsdt(bd_path).astype(np.float64), read_bsdt(sd_path).astype(np.float64)
            cached += 1
        else:
            g_bd, g_sd = mask_targets(mask, params)
        images.append(image)
        masks.append(mask.cells)
        bds.append(g_bd)
        sds.append(g_sd)

    logger.info(f"Loaded {len(rows)} samples (split={split}, cached targets={cached}) from {data_dir}")
    return SegDataset(
        ids=[r.id for r in rows],
        images=np.stack(images),
        masks=np.stack(masks),
        labels=np.array([r.label for r in rows], dtype=np.int64),
        g_bd=np.stack(bds),
        g_sd=np.stack(sds),
    )
