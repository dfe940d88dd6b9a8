"""Input conditioning: intensity normalization and geometry adaptation."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..imagecore import Raster

# mirror margin applied around the field before the forward pass, pixels
INFERENCE_PAD = 32

# the resampler refuses silly magnifications
MIN_RESCALE_FACTOR = 1.0 / 8.0
MAX_RESCALE_FACTOR = 8.0


def normalize_for_ml(r: Raster, rho_min: float, rho_max: float) -> Raster:
    """Affine map of [rho_min, rho_max] onto [0, 1], clamped outside."""
    if not (rho_max > rho_min):
        raise ValueError(f"need rho_max > rho_min, got [{rho_min}, {rho_max}]")
    v = (r.data.astype(np.float64) - rho_min) / (rho_max - rho_min)
    np.clip(v, 0.0, 1.0, out=v)
    return Raster(v.astype(np.float32), r.pixel_size)


def mirror_pad(r: Raster, pad: int) -> Raster:
    """Reflect the field outward without repeating the border sample."""
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if pad == 0:
        return Raster(r.data.copy(), r.pixel_size)
    if pad >= min(r.height, r.width):
        raise ValueError(
            f"pad {pad} too large for a {r.height}x{r.width} raster"
        )
    return Raster(np.pad(r.data, pad, mode="reflect"), r.pixel_size)


def _resample_bilinear(data: np.ndarray, out_shape, scale_y, scale_x):
    """Pixel-center aligned bilinear resample, edges clamped."""
    oh, ow = out_shape
    yy = (np.arange(oh, dtype=np.float64) + 0.5) * scale_y - 0.5
    xx = (np.arange(ow, dtype=np.float64) + 0.5) * scale_x - 0.5
    grid = np.meshgrid(yy, xx, indexing="ij")
    return ndimage.map_coordinates(
        data.astype(np.float64), grid, order=1, mode="nearest"
    )


def rescale_to_network(r: Raster, target_pixel_size: float) -> Raster:
    """Bilinear resample onto the pixel pitch the network was trained at.

    The output grid is rounded to whole pixels; equal pitches return a
    copy untouched so the common case stays bit-exact.
    """
    if not (target_pixel_size > 0):
        raise ValueError("target_pixel_size must be > 0")
    factor = target_pixel_size / r.pixel_size
    if not (MIN_RESCALE_FACTOR <= factor <= MAX_RESCALE_FACTOR):
        raise ValueError(
            f"rescale factor {factor:.4g} outside "
            f"[{MIN_RESCALE_FACTOR}, {MAX_RESCALE_FACTOR}]"
        )
    if target_pixel_size == r.pixel_size:
        return Raster(r.data.copy(), r.pixel_size)
    oh = max(1, round(r.height / factor))
    ow = max(1, round(r.width / factor))
    out = _resample_bilinear(r.data, (oh, ow), factor, factor)
    return Raster(out.astype(np.float32), target_pixel_size)


def resample_to_shape(data: np.ndarray, out_shape) -> np.ndarray:
    """Bilinear resample to an exact pixel count (geometry restoration)."""
    ih, iw = data.shape
    oh, ow = out_shape
    return _resample_bilinear(data, (oh, ow), ih / oh, iw / ow)
