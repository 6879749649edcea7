"""Linear low-pass and per-region blend filtering.

The low-pass operator keeps only coarse structure: box-average downsample
by an integer factor, then bilinear upsample back to the input size.
Factor 1 is the identity. Both stages are linear and preserve constants
exactly, so the blend of two low-passed branches does too.
"""

import numpy as np

from .errors import FilterError
from .grids import as_grid, as_mask, check_same_shape
from .kernels import bilinear_resize, box_down


def low_pass(grid, factor):
    """Remove detail finer than ``factor`` pixels; factor 1 returns a copy.

    The factor caps at each axis length (a 1-pixel axis stays untouched).
    Dimensions not divisible by the factor are reflect-padded to the next
    multiple before downsampling and cropped back after upsampling.
    """
    grid = as_grid(grid)
    h, w, _ = grid.shape
    if factor < 1 or factor != int(factor):
        raise FilterError(f"filter factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor > max(h, w):
        raise FilterError(
            f"filter factor {factor} exceeds largest grid dimension {max(h, w)}"
        )
    fh, fw = min(factor, h), min(factor, w)
    if fh == 1 and fw == 1:
        return grid.copy()

    pad_h = (-h) % fh
    pad_w = (-w) % fw
    work = grid
    if pad_h or pad_w:
        work = np.pad(work, ((0, pad_h), (0, pad_w), (0, 0)), mode="reflect")
    coarse = box_down(work, fh, fw)
    up = bilinear_resize(coarse, work.shape[0], work.shape[1])
    return up[:h, :w]


def blend_filter(grid, blend_mask, factor_in, factor_out):
    """Low-pass with per-region factors, mixed by the blend mask.

    Inside the mask (value 1) the ``factor_in`` filter applies, outside
    (value 0) ``factor_out``; fractional mask values interpolate linearly.
    """
    grid = as_grid(grid)
    blend_mask = as_mask(blend_mask)
    check_same_shape(grid, blend_mask)
    if factor_in == factor_out:
        return low_pass(grid, factor_in)
    # Saturated masks select one branch exactly; the general mix uses the
    # a + m*(b - a) form so constants survive bit-exactly.
    if np.all(blend_mask == 1.0):
        return low_pass(grid, factor_in)
    if np.all(blend_mask == 0.0):
        return low_pass(grid, factor_out)
    m = blend_mask[:, :, None]
    lp_out = low_pass(grid, factor_out)
    return lp_out + m * (low_pass(grid, factor_in) - lp_out)
