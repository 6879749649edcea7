"""Image grids, masks, and PNG I/O.

Grids are plain float64 numpy arrays of shape (H, W, C); masks are (H, W)
arrays in [0, 1]. Pixel-space grids live in [-1, 1]; PNG I/O maps
[0, 255] <-> [-1, 1] so an untouched 8-bit image round-trips bit-exactly.
"""

import numpy as np
from PIL import Image

from .errors import MaskError, PlacementError, ShapeError
from .kernels import bilinear_resize

ALPHA_THRESHOLD = 0.5  # paste footprint binarization


def as_grid(data):
    """Validate and return an (H, W, C) float64 grid."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"grid must be (H, W, C), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"grid dimensions must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("grid contains non-finite values")
    return arr


def as_mask(data, binary=False):
    """Validate and return an (H, W) float64 mask in [0, 1]."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise MaskError(f"mask must be (H, W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MaskError("mask contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise MaskError("mask values must lie in [0, 1]")
    if binary and not np.all((arr == 0.0) | (arr == 1.0)):
        raise MaskError("mask must be binary (values in {0, 1})")
    return arr


def check_same_shape(grid, mask):
    if grid.shape[:2] != mask.shape:
        raise ShapeError(
            f"mask shape {mask.shape} does not match grid {grid.shape[:2]}"
        )


def paste(obj, alpha, background, position, scale=1.0):
    """Alpha-composite an object onto a background.

    obj is an (h, w, C) grid, alpha its (h, w) coverage in [0, 1].
    position is the (row, col) offset of the scaled object's top-left
    corner; scale resizes the object (bilinear) before compositing.
    Returns (reference grid, binary footprint mask).
    """
    obj = as_grid(obj)
    alpha = as_mask(alpha)
    background = as_grid(background)
    check_same_shape(obj, alpha)
    if obj.shape[2] != background.shape[2]:
        raise ShapeError(
            f"object has {obj.shape[2]} channels, background {background.shape[2]}"
        )
    if scale <= 0:
        raise PlacementError(f"scale must be positive, got {scale}")

    oh = max(1, int(round(obj.shape[0] * scale)))
    ow = max(1, int(round(obj.shape[1] * scale)))
    if (oh, ow) != obj.shape[:2]:
        obj = bilinear_resize(obj, oh, ow)
        alpha = bilinear_resize(alpha[:, :, None], oh, ow)[:, :, 0]
        alpha = np.clip(alpha, 0.0, 1.0)

    row, col = position
    bh, bw = background.shape[:2]
    if row < 0 or col < 0 or row + oh > bh or col + ow > bw:
        raise PlacementError(
            f"object footprint {oh}x{ow} at ({row}, {col}) exceeds "
            f"background {bh}x{bw}"
        )

    reference = background.copy()
    window = reference[row : row + oh, col : col + ow]
    a = alpha[:, :, None]
    reference[row : row + oh, col : col + ow] = window * (1.0 - a) + obj * a

    mask = np.zeros((bh, bw), dtype=np.float64)
    mask[row : row + oh, col : col + ow] = (alpha > ALPHA_THRESHOLD).astype(np.float64)
    return reference, mask


# ---------------------------------------------------------------------------
# PNG I/O


def load_image(path):
    """Read a PNG as a grid in [-1, 1]. RGBA alpha is returned separately.

    Returns (grid, alpha) where alpha is an (H, W) array in [0, 1] or None.
    """
    with Image.open(path) as im:
        raw = np.asarray(im)
    if raw.ndim == 2:
        raw = raw[:, :, None]
    alpha = None
    if raw.shape[2] == 4:
        alpha = raw[:, :, 3].astype(np.float64) / 255.0
        raw = raw[:, :, :3]
    grid = raw.astype(np.float64) / 127.5 - 1.0
    return grid, alpha


def save_image(path, grid):
    """Write a grid in [-1, 1] as an 8-bit PNG (grayscale or RGB)."""
    grid = as_grid(grid)
    raw = np.clip(np.rint((grid + 1.0) * 127.5), 0, 255).astype(np.uint8)
    if raw.shape[2] == 1:
        Image.fromarray(raw[:, :, 0], mode="L").save(path)
    elif raw.shape[2] == 3:
        Image.fromarray(raw, mode="RGB").save(path)
    else:
        raise ShapeError(f"can only save 1- or 3-channel grids, got {raw.shape[2]}")


def load_mask(path):
    """Read a grayscale PNG as a mask (0 -> 0.0, 255 -> 1.0)."""
    with Image.open(path) as im:
        raw = np.asarray(im.convert("L"))
    return raw.astype(np.float64) / 255.0


def save_mask(path, mask):
    mask = as_mask(mask)
    raw = np.clip(np.rint(mask * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(raw, mode="L").save(path)
