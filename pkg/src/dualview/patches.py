"""Patch extraction, normalization, and dihedral augmentation.

Conventions: images are 2-D float arrays indexed [row, col] with origin at
the top-left; bounding boxes are (x, y, w, h) in pixel units with x along
columns.  Resizing is bilinear with corner-aligned sampling, so a crop that
is already the target size passes through unchanged.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, GeometryError, NumericError

PATCH_SIZE = 64
DEGENERATE_STD = 1e-8


def enlarge_bbox(bbox, factor: float = 1.1, per_side: bool = False) -> tuple[float, float, float, float]:
    """Grow (x, y, w, h) about its center.

    Default reading: ``factor`` is total growth per axis (1.1 = +10% total,
    5% each side).  ``per_side`` instead applies the growth to each side
    (1.1 = +10% per side, +20% total).
    """
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise GeometryError(f"bbox has non-positive size {w}x{h}")
    scale = 1.0 + 2.0 * (factor - 1.0) if per_side else factor
    cx, cy = x + w / 2.0, y + h / 2.0
    nw, nh = w * scale, h * scale
    return cx - nw / 2.0, cy - nh / 2.0, nw, nh


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a 2-D array."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    rows = np.linspace(0.0, h - 1.0, out_h) if h > 1 else np.zeros(out_h)
    cols = np.linspace(0.0, w - 1.0, out_w) if w > 1 else np.zeros(out_w)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    tl = image[np.ix_(r0, c0)]
    tr = image[np.ix_(r0, c1)]
    bl = image[np.ix_(r1, c0)]
    br = image[np.ix_(r1, c1)]
    top = tl * (1.0 - fc) + tr * fc
    bottom = bl * (1.0 - fc) + br * fc
    return top * (1.0 - fr) + bottom * fr


def extract_patch(
    image: np.ndarray,
    bbox,
    size: int = PATCH_SIZE,
    enlarge: float = 1.1,
    per_side: bool = False,
) -> np.ndarray:
    """Crop an enlarged bbox (clipped to the image) and resize to [1,size,size]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DimensionError(f"extract_patch: image must be 2-D, got {image.shape}")
    ih, iw = image.shape
    x, y, w, h = enlarge_bbox(bbox, factor=enlarge, per_side=per_side)
    if x >= iw or y >= ih or x + w <= 0 or y + h <= 0:
        raise GeometryError(f"bbox {bbox} does not intersect image of {iw}x{ih}")
    col0 = max(int(np.floor(x)), 0)
    row0 = max(int(np.floor(y)), 0)
    col1 = min(int(np.ceil(x + w)), iw)
    row1 = min(int(np.ceil(y + h)), ih)
    if col1 <= col0 or row1 <= row0:
        raise GeometryError(f"bbox {bbox} clips to an empty region")
    crop = image[row0:row1, col0:col1]
    return bilinear_resize(crop, size, size)[None]


def normalize_patch(patch: np.ndarray) -> tuple[np.ndarray, bool]:
    """Zero-mean unit-std (population) normalization.

    Returns (normalized, degenerate).  A patch whose std is below 1e-8
    normalizes to all zeros with the degenerate flag set instead of raising:
    blank corners do occur in real crops.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if not np.all(np.isfinite(patch)):
        raise NumericError("normalize_patch: non-finite values")
    std = patch.std()
    if std < DEGENERATE_STD:
        return np.zeros_like(patch), True
    return (patch - patch.mean()) / std, False


AUGMENT_TAGS = ("r0", "r90", "r180", "r270", "fr0", "fr90", "fr180", "fr270")


def apply_augmentation(patch: np.ndarray, tag: str) -> np.ndarray:
    """One dihedral variant: optional left-right flip, then CCW rotation.

    Returns a view of the input, not a copy.
    """
    if tag not in AUGMENT_TAGS:
        raise ValueError(f"unknown augmentation tag {tag!r}")
    flipped = np.fliplr(patch) if tag.startswith("f") else patch
    quarter_turns = int(tag.lstrip("fr")) // 90
    return np.rot90(flipped, quarter_turns)


def augment(patch: np.ndarray) -> list[tuple[str, np.ndarray]]:
    """The 8 dihedral variants {identity, flipLR} x {0, 90, 180, 270} deg.

    Variants are views of the input array (augmented training sets stay
    memory-flat); copy before mutating.
    """
    patch = np.asarray(patch)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise DimensionError(f"augment: patch must be square 2-D, got {patch.shape}")
    return [(tag, apply_augmentation(patch, tag)) for tag in AUGMENT_TAGS]
