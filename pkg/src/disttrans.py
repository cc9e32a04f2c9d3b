"""
Exact Euclidean distance transforms and signed distance maps.

The EDT is the separable lower-envelope method: a column pass followed by a
row pass, each computing the lower envelope of parabolas rooted at the finite
samples of the previous pass. Squared distances stay integral until the final
square root, so results match a brute-force scan bit for bit.

SDM sign convention: negative inside, zero on the boundary, positive outside.
Normalisation divides each sign class by its own per-image maximum.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyFeatureSet, EmptyForeground, FieldKindError, ValueOutOfRange
from .maskops import BinaryMask, boundary_cells, partition_cells

logger = logging.getLogger(__name__)


class FieldKind(str, Enum):
    """What a ScalarField holds; drives its range invariant."""

    RAW_SDM = "raw_sdm"
    NORMALIZED_SDM = "normalized_sdm"
    HEATMAP = "heatmap"
    PROBABILITY = "probability"
    IMAGE = "image"  # grayscale intensities in [0, 1]
    OTHER = "other"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real value per pixel, row-major, with a kind tag."""

    values: np.ndarray
    kind: FieldKind = FieldKind.OTHER

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueOutOfRange(f"Field must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueOutOfRange("Field values must be finite")
        kind = FieldKind(self.kind)
        if kind == FieldKind.NORMALIZED_SDM and values.size and (values.min() < -1.0 or values.max() > 1.0):
            raise ValueOutOfRange("Normalized SDM values must lie in [-1, 1]")
        if kind in (FieldKind.HEATMAP, FieldKind.PROBABILITY, FieldKind.IMAGE) and values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueOutOfRange(f"{kind.value} values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def dims(self) -> tuple[int, int]:
        return self.height, self.width

    def __repr__(self) -> str:
        return (
            f"ScalarField({self.height}x{self.width}, kind={self.kind.value}, "
            f"min={self.values.min():.4g}, max={self.values.max():.4g})"
        )


# ============================================================================
# Exact EDT
# ============================================================================


def _lower_envelope(f: np.ndarray) -> np.ndarray:
    """1-D squared distance transform of sampled function f (inf = no site)."""
    n = f.shape[0]
    out = np.full(n, np.inf)
    sites = np.flatnonzero(np.isfinite(f))
    if sites.size == 0:
        return out

    v = [int(sites[0])]
    z = [-math.inf]
    for q in sites[1:]:
        q = int(q)
        fq = f[q] + q * q
        while True:
            p = v[-1]
            s = (fq - (f[p] + p * p)) / (2 * (q - p))
            if s <= z[-1]:
                v.pop()
                z.pop()
            else:
                break
        v.append(q)
        z.append(s)

    k = 0
    for i in range(n):
        while k + 1 < len(v) and z[k + 1] < i:
            k += 1
        out[i] = (i - v[k]) ** 2 + f[v[k]]
    return out


def squared_edt(cells: np.ndarray, columns_first: bool = True) -> np.ndarray:
    """Squared EDT to the True pixels of `cells` (inf where none exist)."""
    grid = np.where(cells, 0.0, np.inf)
    axes = (0, 1) if columns_first else (1, 0)
    for axis in axes:
        moved = np.moveaxis(grid, axis, -1).copy()
        for idx in range(moved.shape[0]):
            moved[idx] = _lower_envelope(moved[idx])
        grid = np.moveaxis(moved, -1, axis)
    return grid


def edt(feature: BinaryMask, columns_first: bool = True) -> ScalarField:
    """Distance from every pixel centre to the nearest feature pixel."""
    if not feature.has_foreground():
        raise EmptyFeatureSet(f"EDT needs at least one feature pixel ({feature!r})")
    return ScalarField(np.sqrt(squared_edt(feature.cells, columns_first)), FieldKind.OTHER)


# ============================================================================
# Signed distance maps
# ============================================================================


def compute_sdm(mask: BinaryMask) -> ScalarField:
    """Signed distance to the inner boundary: -d inside, 0 on it, +d outside."""
    if not mask.has_foreground():
        raise EmptyForeground("SDM requires a mask with foreground")
    interior, boundary, _ = partition_cells(mask)
    dist = np.sqrt(squared_edt(boundary))
    sdm = np.where(interior, -dist, dist)
    sdm[boundary] = 0.0
    return ScalarField(sdm, FieldKind.RAW_SDM)


def brute_force_sdm(mask: BinaryMask) -> ScalarField:
    """O(N*|boundary|) reference for compute_sdm; used as a test oracle."""
    if not mask.has_foreground():
        raise EmptyForeground("SDM requires a mask with foreground")
    interior, boundary, _ = partition_cells(mask)
    by, bx = np.nonzero(boundary)
    sdm = np.zeros(mask.dims)
    for r in range(mask.height):
        for c in range(mask.width):
            if boundary[r, c]:
                continue
            d = math.sqrt(float(((by - r) ** 2 + (bx - c) ** 2).min()))
            sdm[r, c] = -d if interior[r, c] else d
    return ScalarField(sdm, FieldKind.RAW_SDM)


def normalize_sdm(sdm: ScalarField) -> ScalarField:
    """Scale negatives into [-1, 0] and positives into [0, 1] by per-sign maxima."""
    if sdm.kind not in (FieldKind.RAW_SDM, FieldKind.NORMALIZED_SDM):
        raise FieldKindError(f"normalize_sdm expects an SDM, got {sdm.kind.value}")
    values = sdm.values.copy()
    neg = values < 0
    pos = values > 0
    if neg.any():
        values[neg] = values[neg] / np.abs(values[neg]).max()
    if pos.any():
        values[pos] = values[pos] / values[pos].max()
    return ScalarField(values, FieldKind.NORMALIZED_SDM)


def normalized_sdm(mask: BinaryMask) -> ScalarField:
    """G_sd^n target for a mask."""
    return normalize_sdm(compute_sdm(mask))


def boundary_edt(mask: BinaryMask) -> np.ndarray:
    """EDT to the mask's boundary pixels as a plain array (inf-free when foreground exists)."""
    return np.sqrt(squared_edt(boundary_cells(mask.cells)))
