"""
Deterministic synthetic dataset: dark star-convex regions on a textured
bright background, labelled by region geometry.

- normal: medium radius, nearly round
- enlarged_irregular: large radius, strongly perturbed contour
- reduced: small radius, nearly round

Contours follow r(theta) = r0 * (1 + a * sum_k b_k cos(k theta + phi_k)),
k = 1..5, with sum |b_k| = 1 so the radius stays within r0 * (1 +- a).
Every sample draws from its own generator seeded by (seed, index), so a
single id can be regenerated in isolation.

Class information lives in the mask geometry only; image intensity
statistics are the same for every class.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage
from skimage.measure import perimeter
from sklearn.tree import DecisionTreeClassifier

from .disttrans import FieldKind, ScalarField
from .errors import DataEmpty, DegenerateShape
from .formats import read_mask, write_image, write_mask
from .maskops import BinaryMask, partition_cells

logger = logging.getLogger(__name__)

N_HARMONICS = 5
MIN_FOREGROUND = 8
MAX_TRIES = 10
SPLIT_FRACTIONS = {"train": 0.7, "val": 0.1, "test": 0.2}
MANIFEST_HEADER = ["id", "class", "split"]


class ShapeClass(str, Enum):
    NORMAL = "normal"
    ENLARGED_IRREGULAR = "enlarged_irregular"
    REDUCED = "reduced"


CLASS_NAMES = [c.value for c in ShapeClass]


class ClassGeometry(BaseModel):
    """Radius and contour perturbation ranges; radii are fractions of image size."""

    model_config = ConfigDict(extra="forbid")

    radius_min: float = Field(gt=0, lt=0.45)
    radius_max: float = Field(gt=0, lt=0.45)
    amplitude_min: float = Field(ge=0, lt=1)
    amplitude_max: float = Field(ge=0, lt=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.radius_min > self.radius_max:
            raise ValueError(f"radius_min {self.radius_min} > radius_max {self.radius_max}")
        if self.amplitude_min > self.amplitude_max:
            raise ValueError(f"amplitude_min {self.amplitude_min} > amplitude_max {self.amplitude_max}")
        return self


def _default_geometry() -> dict[ShapeClass, ClassGeometry]:
    return {
        ShapeClass.NORMAL: ClassGeometry(radius_min=0.12, radius_max=0.18, amplitude_min=0.02, amplitude_max=0.08),
        ShapeClass.ENLARGED_IRREGULAR: ClassGeometry(
            radius_min=0.22, radius_max=0.30, amplitude_min=0.20, amplitude_max=0.30
        ),
        ShapeClass.REDUCED: ClassGeometry(radius_min=0.06, radius_max=0.10, amplitude_min=0.02, amplitude_max=0.08),
    }


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(default=64, ge=16)
    n_per_class: int = Field(default=100, gt=0)
    geometry: dict[ShapeClass, ClassGeometry] = Field(default_factory=_default_geometry)
    foreground_intensity: float = Field(default=0.2, ge=0, le=1)
    background_intensity: float = Field(default=0.6, ge=0, le=1)
    texture_amplitude: float = Field(default=0.2, ge=0, le=0.5)
    texture_cell: int = Field(default=8, gt=0, description="Value-noise lattice spacing in pixels")
    blur_sigma: float = Field(default=0.7, ge=0)
    center_jitter: float = Field(default=0.10, ge=0, le=0.2)
    seed: int = 0

    @model_validator(mode="after")
    def _disjoint_ranges(self):
        missing = set(ShapeClass) - set(self.geometry)
        if missing:
            raise ValueError(f"geometry missing classes: {sorted(c.value for c in missing)}")
        ranges = sorted((g.radius_min, g.radius_max, c.value) for c, g in self.geometry.items())
        for (lo_a, hi_a, name_a), (lo_b, _, name_b) in zip(ranges, ranges[1:]):
            if hi_a >= lo_b:
                raise ValueError(f"radius ranges of {name_a} and {name_b} overlap")
        return self


@dataclass
class Sample:
    image: ScalarField
    mask: BinaryMask
    label: int


# ============================================================================
# Sample generation
# ============================================================================


def star_convex_mask(size: int, center: tuple[float, float], r0: float, amplitude: float,
                     weights: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Rasterise r(theta) at pixel centres; a pixel is inside when its radius <= r(theta)."""
    rows = np.arange(size, dtype=np.float64)[:, None] - center[0]
    cols = np.arange(size, dtype=np.float64)[None, :] - center[1]
    theta = np.arctan2(rows, cols)
    rho = np.hypot(rows, cols)
    k = np.arange(1, len(weights) + 1, dtype=np.float64)
    harmonics = (weights[:, None, None] * np.cos(k[:, None, None] * theta[None] + phases[:, None, None])).sum(axis=0)
    return rho <= r0 * (1.0 + amplitude * harmonics)


def value_noise(size: int, cell: int, rng: np.random.Generator) -> np.ndarray:
    """Bilinearly upsampled lattice noise in [-1, 1]."""
    lattice = rng.uniform(-1.0, 1.0, size=(size // cell + 2, size // cell + 2))
    field = ndimage.zoom(lattice, cell, order=1, mode="nearest")
    return np.clip(field[:size, :size], -1.0, 1.0)


@dataclass
class ShapeParams:
    center: tuple[float, float]
    r0: float
    amplitude: float
    weights: np.ndarray
    phases: np.ndarray


def draw_shape_params(shape_class: ShapeClass, rng: np.random.Generator, config: SynthConfig) -> ShapeParams:
    geometry = config.geometry[ShapeClass(shape_class)]
    size = config.image_size
    r0 = rng.uniform(geometry.radius_min, geometry.radius_max) * size
    amplitude = rng.uniform(geometry.amplitude_min, geometry.amplitude_max)
    raw = rng.normal(size=N_HARMONICS)
    weights = raw / max(np.abs(raw).sum(), 1e-12)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=N_HARMONICS)
    jitter = rng.uniform(-config.center_jitter, config.center_jitter, size=2) * size
    center = ((size - 1) / 2.0 + jitter[0], (size - 1) / 2.0 + jitter[1])
    return ShapeParams(center=center, r0=r0, amplitude=amplitude, weights=weights, phases=phases)


def _draw_shape(shape_class: ShapeClass, rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    p = draw_shape_params(shape_class, rng, config)
    return star_convex_mask(config.image_size, p.center, p.r0, p.amplitude, p.weights, p.phases)


def _is_degenerate(cells: np.ndarray) -> bool:
    if cells.sum() < MIN_FOREGROUND:
        return True
    interior, _, exterior = partition_cells(BinaryMask(cells))
    return not interior.any() or not exterior.any()


def gen_sample(shape_class: ShapeClass, rng: np.random.Generator, config: SynthConfig) -> Sample:
    shape_class = ShapeClass(shape_class)
    for attempt in range(MAX_TRIES):
        cells = _draw_shape(shape_class, rng, config)
        if not _is_degenerate(cells):
            break
        logger.debug(f"Resampling degenerate {shape_class.value} shape (attempt {attempt + 1})")
    else:
        raise DegenerateShape(f"No usable {shape_class.value} shape after {MAX_TRIES} tries")

    size = config.image_size
    background = config.background_intensity + config.texture_amplitude * value_noise(size, config.texture_cell, rng)
    foreground = config.foreground_intensity + 0.02 * rng.normal(size=(size, size))
    image = np.where(cells, foreground, background)
    if config.blur_sigma > 0:
        image = ndimage.gaussian_filter(image, config.blur_sigma, mode="nearest")
    image = np.clip(image, 0.0, 1.0)
    return Sample(
        image=ScalarField(image, FieldKind.IMAGE),
        mask=BinaryMask(cells),
        label=CLASS_NAMES.index(shape_class.value),
    )


def sample_id(index: int) -> str:
    return f"{index:05d}"


def regenerate_sample(config: SynthConfig, index: int) -> Sample:
    """Sample `index` of the dataset described by `config`, without generating the rest."""
    n_classes = len(CLASS_NAMES)
    if not 0 <= index < n_classes * config.n_per_class:
        raise IndexError(f"Sample index {index} outside dataset of {n_classes * config.n_per_class}")
    shape_class = ShapeClass(CLASS_NAMES[index // config.n_per_class])
    return gen_sample(shape_class, np.random.default_rng([config.seed, index]), config)


# ============================================================================
# Dataset on disk
# ============================================================================


def stratified_splits(n_per_class: int, n_classes: int, seed: int) -> list[str]:
    """Split name per global index; each class gets round(0.7n) train, round(0.1n) val, rest test."""
    n_train = round(SPLIT_FRACTIONS["train"] * n_per_class)
    n_val = round(SPLIT_FRACTIONS["val"] * n_per_class)
    per_class = ["train"] * n_train + ["val"] * n_val + ["test"] * (n_per_class - n_train - n_val)
    rng = np.random.default_rng([seed, n_per_class, n_classes])
    splits: list[str] = []
    for _ in range(n_classes):
        order = rng.permutation(n_per_class)
        splits.extend(per_class[i] for i in order)
    return splits


@dataclass
class ManifestRow:
    id: str
    label: int
    split: str

    @property
    def class_name(self) -> str:
        return CLASS_NAMES[self.label]


def write_manifest(path: Path, rows: Sequence[ManifestRow]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for row in rows:
            writer.writerow([row.id, row.class_name, row.split])


def read_manifest(path: Path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise DataEmpty(f"Manifest not found at {path}")
    rows = []
    with path.open(newline="", encoding="utf-8") as handle:
        for record in csv.DictReader(handle):
            if record.get("class") not in CLASS_NAMES:
                raise DataEmpty(f"{path}: unknown class {record.get('class')!r} for id {record.get('id')}")
            rows.append(ManifestRow(id=record["id"], label=CLASS_NAMES.index(record["class"]), split=record["split"]))
    if not rows:
        raise DataEmpty(f"Manifest {path} lists no samples")
    return rows


def write_sample(out_dir: Path, sid: str, sample: Sample) -> None:
    write_image(out_dir / "images" / f"{sid}.pgm", sample.image.values)
    write_mask(out_dir / "masks" / f"{sid}.pgm", sample.mask)


def gen_dataset(config: SynthConfig, out_dir: Path) -> list[ManifestRow]:
    """Write images/, masks/, manifest.csv and config.json under out_dir.

    OSError propagates when out_dir is not writable.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    splits = stratified_splits(config.n_per_class, len(CLASS_NAMES), config.seed)
    rows = []
    for index, split in enumerate(splits):
        sample = regenerate_sample(config, index)
        sid = sample_id(index)
        write_sample(out_dir, sid, sample)
        rows.append(ManifestRow(id=sid, label=sample.label, split=split))

    write_manifest(out_dir / "manifest.csv", rows)
    (out_dir / "config.json").write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    counts = {name: sum(1 for r in rows if r.split == name) for name in SPLIT_FRACTIONS}
    logger.info(f"Generated {len(rows)} samples in {out_dir} (splits: {counts})")
    return rows


# ============================================================================
# Separability audit
# ============================================================================


def geometry_features(mask: BinaryMask) -> tuple[float, float]:
    """(area, compactness 4*pi*A / P^2) with the raster perimeter estimate."""
    area = float(mask.area)
    p = float(perimeter(mask.cells, neighborhood=4))
    compactness = 4.0 * math.pi * area / (p * p) if p > 0 else 0.0
    return area, compactness


def fit_stump(x: np.ndarray, y: np.ndarray) -> DecisionTreeClassifier:
    """Depth-2 axis-aligned tree on (area, compactness) rows."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise DataEmpty("Cannot fit a stump on zero samples")
    return DecisionTreeClassifier(max_depth=2, random_state=0).fit(x, y)


def separability(data_dir: Path) -> float:
    """Test-split accuracy (percent) of a depth-2 stump fit on train-split geometry."""
    data_dir = Path(data_dir)
    rows = read_manifest(data_dir / "manifest.csv")
    by_split: dict[str, tuple[list, list]] = {"train": ([], []), "test": ([], [])}
    for row in rows:
        if row.split in by_split:
            feats, labels = by_split[row.split]
            feats.append(geometry_features(read_mask(data_dir / "masks" / f"{row.id}.pgm")))
            labels.append(row.label)
    if not by_split["train"][0] or not by_split["test"][0]:
        raise DataEmpty(f"{data_dir} needs both train and test samples")
    stump = fit_stump(np.array(by_split["train"][0]), np.array(by_split["train"][1]))
    predicted = stump.predict(np.array(by_split["test"][0]))
    accuracy = 100.0 * float((predicted == np.array(by_split["test"][1])).mean())
    logger.info(f"Depth-2 stump test accuracy on {data_dir}: {accuracy:.2f}%")
    return accuracy
