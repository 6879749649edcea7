"""Mask smoothing that feathers outward only.

Naive Gaussian blur erodes mask interiors, which would let the guidance
override reference pixels that were supposed to stay fixed. The outward
blur keeps every interior pixel at 1 and decays over dilation shells:
shell p (reached after p one-pixel dilations) ends up with value
1 - s(p / p_blend) for a smoothing profile s.
"""

from dataclasses import dataclass

import numpy as np

from .errors import MaskError
from .grids import as_mask
from .kernels import dilate4


def linear_smoothing(x):
    """Default smoothing profile; any increasing map with s(0)=0, s(1)=1 works."""
    return x


@dataclass(frozen=True)
class SmoothedMask:
    base: np.ndarray  # original binary mask
    blend_pixels: int
    values: np.ndarray  # fractional mask, 1 on the base support


def dilate(mask):
    """One-pixel dilation over the 4-connected neighborhood."""
    return dilate4(as_mask(mask))


def blur_outwards(mask, blend_pixels, smoothing=linear_smoothing):
    """Feather a binary mask outward over ``blend_pixels`` dilation shells.

    Accumulates successive dilations weighted by increments of the
    smoothing profile; the weights telescope to 1, so the interior stays
    saturated. ``blend_pixels=0`` returns the mask unchanged.
    """
    base = as_mask(mask, binary=True)
    if blend_pixels < 0:
        raise MaskError(f"blend_pixels must be >= 0, got {blend_pixels}")
    if blend_pixels == 0:
        return SmoothedMask(base=base, blend_pixels=0, values=base.copy())

    values = np.zeros_like(base)
    current = base.copy()
    for p in range(blend_pixels):
        weight = smoothing((p + 1) / blend_pixels) - smoothing(p / blend_pixels)
        values += weight * current
        current = dilate4(current)
    # Telescoped weights sum to s(1) - s(0) = 1 only up to float rounding;
    # pin the interior to exactly 1 and clip the dust elsewhere.
    values = np.clip(values, 0.0, 1.0)
    values[base == 1.0] = 1.0
    return SmoothedMask(base=base, blend_pixels=blend_pixels, values=values)


def default_blend_pixels(factor_in, factor_out):
    """Feather width scaled with the stronger of the two filter factors."""
    return 4 * max(factor_in, factor_out)
