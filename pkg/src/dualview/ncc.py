"""Normalized cross correlation between two registered patches.

This is the template-matching comparator the learned matcher is measured
against: whole-patch correlation at a single alignment (candidate patches
are already centered crops), remapped from [-1, 1] to [0, 1] so it can be
scored like a probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

DEGENERATE_STD = 1e-8


@dataclass(frozen=True)
class NccScore:
    raw: float  # in [-1, 1]
    mapped: float  # (raw + 1) / 2, in [0, 1]
    degenerate: bool = False


def ncc(patch_a: np.ndarray, patch_b: np.ndarray) -> NccScore:
    """Pearson correlation of the two patches.

    A constant patch has no direction to correlate with: the result is
    pinned to raw 0 / mapped 0.5 (maximal uncertainty) with the degenerate
    flag set rather than raising.
    """
    a = np.asarray(patch_a, dtype=np.float64)
    b = np.asarray(patch_b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"ncc: patch shapes {a.shape} vs {b.shape} differ")
    ac = a - a.mean()
    bc = b - b.mean()
    sum_sq_a = np.sum(ac * ac)
    sum_sq_b = np.sum(bc * bc)
    if np.sqrt(sum_sq_a / a.size) < DEGENERATE_STD or np.sqrt(sum_sq_b / b.size) < DEGENERATE_STD:
        return NccScore(0.0, 0.5, degenerate=True)
    # sqrt of the product (not product of sqrts): sqrt(s*s) == s in IEEE-754,
    # so perfectly (anti)correlated patches score exactly +-1
    raw = float(np.clip(np.sum(ac * bc) / np.sqrt(sum_sq_a * sum_sq_b), -1.0, 1.0))
    return NccScore(raw, (raw + 1.0) / 2.0)


def ncc_score_dataset(pairs) -> list[tuple[float, int]]:
    """(mapped score, label) per pair, order preserved; feeds the ROC."""
    return [(ncc(p.patch_a, p.patch_b).mapped, p.label) for p in pairs]
