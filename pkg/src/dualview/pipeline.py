"""Dual-view candidate filtering.

Per study: every CC candidate is paired with every MLO candidate (full
cross product), each pair is scored by the chosen matcher, and each pair is
labeled positive iff *both* members are true lesions under the Dice rule.
Candidates whose opposite view produced no candidates at all are
"standalone": they cannot be match-scored, and the two reporting modes
either drop them or carry them through at their single-view score.

A candidate's adjusted score is its single-view score times the best match
probability over its pairs — one confirming counterpart is enough, and the
multiplicative form preserves the single-view ranking among confirmed
candidates.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .datasets import DetectionCandidate, polygon_bbox
from .errors import GeometryError, ValidationError
from .evaluation import RocCurve, roc
from .geometry import DICE_DELTA, label_candidate
from .ncc import ncc
from .patches import extract_patch, normalize_patch
from .training import Ensemble, predict_batch

logger = logging.getLogger(__name__)

STANDALONE_MODES = ("include", "exclude")


@dataclass
class PairRecord:
    cc_id: str
    mlo_id: str
    probability: float
    label: int  # 1 iff both candidates are true lesions


@dataclass
class StandaloneDetection:
    id: str
    view: str
    score: float
    label: int


@dataclass
class AdjustedDetection:
    id: str
    view: str
    original: float
    adjusted: float
    standalone: bool
    label: int


@dataclass
class FpReductionReport:
    threshold: float
    total_true: int
    total_false: int
    retained_true: int
    removed_false: int

    @property
    def sensitivity(self) -> float:
        return self.retained_true / self.total_true if self.total_true else 0.0

    @property
    def specificity(self) -> float:
        return self.removed_false / self.total_false if self.total_false else 0.0


class PairScorer(Protocol):
    def score(self, patches_a: np.ndarray, patches_b: np.ndarray) -> np.ndarray: ...


class EnsembleScorer:
    def __init__(self, ensemble: Ensemble):
        self.ensemble = ensemble

    def score(self, patches_a, patches_b):
        return predict_batch(self.ensemble, patches_a, patches_b)


class NccScorer:
    def score(self, patches_a, patches_b):
        return np.array([ncc(a, b).mapped for a, b in zip(patches_a, patches_b)])


def enumerate_pairs(
    p_cc: list[DetectionCandidate],
    p_mlo: list[DetectionCandidate],
) -> tuple[list[tuple[DetectionCandidate, DetectionCandidate]], list[DetectionCandidate]]:
    """Full CC x MLO cross product plus the standalone candidates.

    A candidate is standalone iff the other view contributed no candidates,
    so the standalone list is non-empty only when one side is empty.
    """
    if not p_cc or not p_mlo:
        return [], list(p_cc) + list(p_mlo)
    return [(cc, mlo) for cc in p_cc for mlo in p_mlo], []


def label_candidates(
    candidates: list[DetectionCandidate],
    gt_polygons_by_image: dict[str, list],
    image_dims_by_image: dict[str, tuple[int, int]],
    delta: float = DICE_DELTA,
) -> dict[str, int]:
    """Candidate id -> 1/0 true-lesion label via the Dice rule."""
    labels = {}
    for cand in candidates:
        labels[cand.id] = int(
            label_candidate(
                cand.polygon,
                gt_polygons_by_image.get(cand.image, []),
                image_dims_by_image[cand.image],
                delta=delta,
            )
        )
    return labels


def score_pairs(
    pairs: list[tuple[DetectionCandidate, DetectionCandidate]],
    scorer: PairScorer,
    images: dict[str, np.ndarray],
    candidate_labels: dict[str, int],
) -> tuple[list[PairRecord], int]:
    """Extract + normalize both patches of every pair and score them.

    Pairs whose patch extraction fails are skipped with a logged reason;
    the skipped count keeps |records| + skipped == N*M auditable.
    """
    usable: list[tuple[DetectionCandidate, DetectionCandidate]] = []
    patches_cc: list[np.ndarray] = []
    patches_mlo: list[np.ndarray] = []
    skipped = 0
    for cc, mlo in pairs:
        try:
            patch_cc, _ = normalize_patch(
                extract_patch(images[cc.image], polygon_bbox(cc.polygon))[0]
            )
            patch_mlo, _ = normalize_patch(
                extract_patch(images[mlo.image], polygon_bbox(mlo.polygon))[0]
            )
        except (GeometryError, KeyError) as exc:
            logger.warning("skipping pair (%s, %s): %s", cc.id, mlo.id, exc)
            skipped += 1
            continue
        usable.append((cc, mlo))
        patches_cc.append(patch_cc)
        patches_mlo.append(patch_mlo)

    records: list[PairRecord] = []
    if usable:
        probs = scorer.score(np.stack(patches_cc), np.stack(patches_mlo))
        for (cc, mlo), prob in zip(usable, probs):
            label = int(candidate_labels[cc.id] and candidate_labels[mlo.id])
            records.append(PairRecord(cc.id, mlo.id, float(prob), label))
    return records, skipped


def evaluate_pipeline(
    records: list[PairRecord],
    standalone_mode: str,
    standalones: list[StandaloneDetection] = (),
) -> RocCurve:
    """ROC over pair records, optionally appending standalone pseudo-records.

    In include mode each standalone contributes (single-view score, own Dice
    label); exclude mode evaluates the pairs alone.
    """
    if standalone_mode not in STANDALONE_MODES:
        raise ValidationError(f"standalone_mode {standalone_mode!r} not in {STANDALONE_MODES}")
    if not records:
        raise ValidationError("evaluate_pipeline: no pair records")
    scored = [(r.probability, r.label) for r in records]
    if standalone_mode == "include":
        scored += [(s.score, s.label) for s in standalones]
    return roc(scored)


def adjust_scores(
    p_cc: list[DetectionCandidate],
    p_mlo: list[DetectionCandidate],
    records: list[PairRecord],
    standalone_mode: str,
    candidate_labels: dict[str, int],
) -> list[AdjustedDetection]:
    """Down-weight each candidate by its best match probability.

    Paired candidate: adjusted = original * max match probability over its
    pairs.  Standalone: passed through unchanged in include mode, zeroed
    (omitted) in exclude mode.
    """
    if standalone_mode not in STANDALONE_MODES:
        raise ValidationError(f"standalone_mode {standalone_mode!r} not in {STANDALONE_MODES}")
    best: dict[str, float] = {}
    for record in records:
        best[record.cc_id] = max(best.get(record.cc_id, 0.0), record.probability)
        best[record.mlo_id] = max(best.get(record.mlo_id, 0.0), record.probability)
    out = []
    for cand in list(p_cc) + list(p_mlo):
        label = candidate_labels[cand.id]
        if cand.id in best:
            out.append(
                AdjustedDetection(
                    cand.id, cand.view, cand.score, cand.score * best[cand.id], False, label
                )
            )
        else:
            adjusted = cand.score if standalone_mode == "include" else 0.0
            out.append(AdjustedDetection(cand.id, cand.view, cand.score, adjusted, True, label))
    return out


def fp_reduction_report(adjusted: list[AdjustedDetection], threshold: float) -> FpReductionReport:
    """Count false detections removed vs true lesions retained at a cut.

    A detection is removed iff its adjusted score falls strictly below the
    threshold, matching the ">= threshold is positive" ROC convention.
    """
    total_true = sum(1 for a in adjusted if a.label == 1)
    total_false = sum(1 for a in adjusted if a.label == 0)
    retained_true = sum(1 for a in adjusted if a.label == 1 and a.adjusted >= threshold)
    removed_false = sum(1 for a in adjusted if a.label == 0 and a.adjusted < threshold)
    return FpReductionReport(threshold, total_true, total_false, retained_true, removed_false)


# -- file export ------------------------------------------------------------------


def save_pair_records(records: list[PairRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cc_id", "mlo_id", "probability", "label"])
        for r in records:
            writer.writerow([r.cc_id, r.mlo_id, repr(r.probability), r.label])


def save_adjusted(adjusted: list[AdjustedDetection], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "view", "original", "adjusted", "standalone", "label"])
        for a in adjusted:
            writer.writerow([a.id, a.view, repr(a.original), repr(a.adjusted), int(a.standalone), a.label])
