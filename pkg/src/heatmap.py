"""
Soft boundary heatmap targets.

Every boundary pixel contributes a 2-D Gaussian; the Gaussians are composed
with Heatsum, the probabilistic union 1 - prod(1 - g_k). The composed field
is floored (values below `floor` set to 0, an absolute threshold on the
unnormalised field) and then divided by its maximum so the target lies in
[0, 1] with peak exactly 1.
"""

import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field

from .disttrans import FieldKind, ScalarField
from .errors import DimMismatch, EmptyForeground, InvalidSigma, ValueOutOfRange
from .maskops import BinaryMask, Pixel, extract_boundary

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 2.0
DEFAULT_FLOOR = 0.001


class HeatmapParams(BaseModel):
    """Gaussian width and pre-normalisation zeroing threshold."""

    sigma: float = Field(default=DEFAULT_SIGMA, gt=0, description="Gaussian standard deviation in pixels")
    floor: float = Field(default=DEFAULT_FLOOR, ge=0, description="Absolute threshold applied before normalisation")


def _gaussian_values(center: Pixel, sigma: float, dims: tuple[int, int]) -> np.ndarray:
    rows = np.arange(dims[0], dtype=np.float64)[:, None]
    cols = np.arange(dims[1], dtype=np.float64)[None, :]
    dist2 = (rows - center[0]) ** 2 + (cols - center[1]) ** 2
    return np.exp(-dist2 / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)


def gaussian_field(center: Pixel, sigma: float, dims: tuple[int, int]) -> ScalarField:
    """Isotropic Gaussian density centred on a pixel, evaluated at pixel centres."""
    if not sigma > 0:
        raise InvalidSigma(f"sigma must be > 0, got {sigma}")
    if not (0 <= center[0] < dims[0] and 0 <= center[1] < dims[1]):
        raise DimMismatch(f"Center {center} lies outside dims {dims}")
    return ScalarField(_gaussian_values(center, sigma, dims), FieldKind.OTHER)


def heatsum_values(fields: Sequence[np.ndarray]) -> np.ndarray:
    """Array form of heatsum(); folds left to right."""
    complement = np.ones_like(fields[0], dtype=np.float64)
    for values in fields:
        complement *= 1.0 - values
    return 1.0 - complement


def heatsum(fields: Sequence[ScalarField]) -> ScalarField:
    """Pixelwise 1 - prod_k (1 - field_k)."""
    if not fields:
        raise DimMismatch("heatsum needs at least one field")
    dims = fields[0].dims
    for field in fields:
        if field.dims != dims:
            raise DimMismatch(f"heatsum dims differ: {field.dims} vs {dims}")
        if field.values.min() < 0.0 or field.values.max() > 1.0:
            raise ValueOutOfRange("heatsum inputs must lie in [0, 1]")
    return ScalarField(heatsum_values([f.values for f in fields]), FieldKind.OTHER)


def composed_boundary_field(mask: BinaryMask, sigma: float) -> np.ndarray:
    """Heatsum of the boundary Gaussians before flooring and normalisation."""
    if not sigma > 0:
        raise InvalidSigma(f"sigma must be > 0, got {sigma}")
    boundary = extract_boundary(mask)
    if boundary.is_empty():
        raise EmptyForeground("Boundary heatmap requires a mask with foreground")
    peak = 1.0 / (2.0 * math.pi * sigma * sigma)
    if peak > 1.0:
        raise ValueOutOfRange(f"sigma={sigma} gives a Gaussian peak above 1")
    return heatsum_values([_gaussian_values(point, sigma, mask.dims) for point in boundary])


def boundary_heatmap(mask: BinaryMask, params: HeatmapParams | None = None) -> ScalarField:
    """G_bd^n target: composed boundary Gaussians, floored, scaled to max 1."""
    params = params or HeatmapParams()
    values = composed_boundary_field(mask, params.sigma)
    values[values < params.floor] = 0.0
    peak = values.max()
    if peak > 0:
        values = values / peak
    else:
        logger.warning(f"Heatmap floor {params.floor} zeroed the whole field (sigma={params.sigma})")
    return ScalarField(values, FieldKind.HEATMAP)
