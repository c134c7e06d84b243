"""Polygon rasterization and Dice overlap for candidate labeling.

Rasterization uses the even-odd rule sampled at pixel centers: pixel
(row r, col c) has its center at (x, y) = (c + 0.5, r + 0.5).  Self-
intersecting polygons are legal; even-odd handles them without a validity
check.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ValidationError

DICE_DELTA = 0.1


def rasterize_polygon(polygon, dims: tuple[int, int]) -> np.ndarray:
    """Boolean mask of shape ``dims`` = (height, width) for one polygon."""
    verts = np.asarray(polygon, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise ValidationError(
            f"polygon must be [N>=3, 2] (x, y) vertices, got shape {verts.shape}"
        )
    height, width = dims
    mask = np.zeros((height, width), dtype=bool)
    x0, y0 = verts[:, 0], verts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    keep = y0 != y1  # horizontal edges never cross a scanline
    x0, y0, x1, y1 = x0[keep], y0[keep], x1[keep], y1[keep]
    if x0.size == 0:
        return mask
    for r in range(height):
        yc = r + 0.5
        crossing = (y0 <= yc) != (y1 <= yc)  # half-open: shared vertices count once
        if not crossing.any():
            continue
        xs = x0[crossing] + (yc - y0[crossing]) * (x1[crossing] - x0[crossing]) / (
            y1[crossing] - y0[crossing]
        )
        xs.sort()
        for a, b in zip(xs[0::2], xs[1::2]):
            # pixel centers c+0.5 in [a, b)
            lo = max(int(np.ceil(a - 0.5)), 0)
            hi = min(int(np.ceil(b - 0.5)), width)
            if hi > lo:
                mask[r, lo:hi] = True
    return mask


def dice(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """2|A&B| / (|A|+|B|); two empty masks score 0 (non-informative)."""
    mask_a = np.asarray(mask_a, dtype=bool)
    mask_b = np.asarray(mask_b, dtype=bool)
    if mask_a.shape != mask_b.shape:
        raise DimensionError(f"dice: mask shapes {mask_a.shape} vs {mask_b.shape} differ")
    total = int(mask_a.sum()) + int(mask_b.sum())
    if total == 0:
        return 0.0
    return 2.0 * int((mask_a & mask_b).sum()) / total


def label_candidate(candidate_polygon, gt_polygons, image_dims, delta: float = DICE_DELTA) -> bool:
    """True-lesion iff the best Dice against any ground truth exceeds delta.

    The comparison is strict: a candidate at exactly delta is a false
    detection.
    """
    if not gt_polygons:
        return False
    cand = rasterize_polygon(candidate_polygon, image_dims)
    best = max(dice(cand, rasterize_polygon(gt, image_dims)) for gt in gt_polygons)
    return best > delta
