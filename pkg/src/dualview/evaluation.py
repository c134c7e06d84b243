"""ROC curves, AUC, operating points, and their file formats.

Thresholds sit at the distinct score values, ties grouped into single
steps; the decision rule is "positive iff score >= threshold".  AUC is the
trapezoidal area, which with grouped ties equals the Mann-Whitney statistic
(ties counted 1/2) exactly; ``auc_oracle`` computes that statistic
independently by brute-force pair counting.

CSV schema: header ``threshold,fpr,tpr``, one row per operating point.  The
plot is a standalone SVG written by hand so re-running a command reproduces
identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SingleClassError, ValidationError


@dataclass
class RocCurve:
    thresholds: np.ndarray  # decreasing; thresholds[0] = +inf for the (0,0) point
    fpr: np.ndarray  # non-decreasing, starts 0, ends 1
    tpr: np.ndarray  # non-decreasing, starts 0, ends 1
    auc: float

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))


def _split_scores(scores) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray([s for s, _ in scores], dtype=np.float64)
    labels = np.asarray([int(lab) for _, lab in scores])
    if values.size == 0 or labels.min() == labels.max():
        raise SingleClassError("roc: need at least one positive and one negative label")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("roc: labels must be 0 or 1")
    return values, labels


def roc(scores) -> RocCurve:
    """ROC over (score, label) pairs; labels 1 = positive."""
    values, labels = _split_scores(scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos

    order = np.argsort(-values, kind="stable")
    sorted_values = values[order]
    sorted_labels = labels[order]
    cum_tp = np.cumsum(sorted_labels)
    cum_fp = np.cumsum(1 - sorted_labels)

    # last index of each tie group = the operating point after taking the group
    distinct = np.nonzero(np.diff(sorted_values, append=-np.inf))[0]
    thresholds = np.concatenate(([np.inf], sorted_values[distinct]))
    tpr = np.concatenate(([0.0], cum_tp[distinct] / n_pos))
    fpr = np.concatenate(([0.0], cum_fp[distinct] / n_neg))
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds, fpr, tpr, auc)


def auc_oracle(scores) -> float:
    """Mann-Whitney statistic: P(positive scores above negative), ties 1/2."""
    values, labels = _split_scores(scores)
    pos = values[labels == 1]
    neg = values[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (pos.size * neg.size))


def operating_point(curve: RocCurve, target_sensitivity: float) -> tuple[float, float, float]:
    """(threshold, sensitivity, specificity) at the lowest-FPR point with
    TPR >= target."""
    if not 0.0 < target_sensitivity <= 1.0:
        raise ValidationError(f"target sensitivity {target_sensitivity} outside (0, 1]")
    idx = int(np.argmax(curve.tpr >= target_sensitivity))
    return (
        float(curve.thresholds[idx]),
        float(curve.tpr[idx]),
        float(1.0 - curve.fpr[idx]),
    )


# -- export --------------------------------------------------------------------


def save_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for thr, fpr, tpr in curve.points():
            writer.writerow([repr(thr), repr(fpr), repr(tpr)])


def load_roc_csv(path) -> RocCurve:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["threshold", "fpr", "tpr"]:
            raise ValidationError(f"{path}: unexpected ROC CSV header {header}")
        rows = [(float(t), float(f), float(p)) for t, f, p in reader]
    thresholds = np.array([r[0] for r in rows])
    fpr = np.array([r[1] for r in rows])
    tpr = np.array([r[2] for r in rows])
    return RocCurve(thresholds, fpr, tpr, float(np.trapezoid(tpr, fpr)))


def save_summary(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


_SVG_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd")


def save_roc_svg(curves: list[tuple[str, RocCurve]], path, title: str = "ROC") -> None:
    """Standalone vector plot of one or more curves (deterministic bytes)."""
    size, margin = 480, 56
    span = size - 2 * margin

    def px(fpr: float) -> float:
        return margin + fpr * span

    def py(tpr: float) -> float:
        return size - margin - tpr * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<text x="{size / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" y2="{size - margin}" '
        f'stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{size - margin}" stroke="black"/>',
        f'<line x1="{px(0):.1f}" y1="{py(0):.1f}" x2="{px(1):.1f}" y2="{py(1):.1f}" '
        f'stroke="#999999" stroke-dasharray="4,4"/>',
        f'<text x="{size / 2:.1f}" y="{size - 16}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">false positive rate</text>',
        f'<text x="16" y="{size / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {size / 2:.1f})">true positive rate</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{px(tick):.1f}" y="{size - margin + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{tick:g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{py(tick) + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{tick:g}</text>'
        )
    for i, (label, curve) in enumerate(curves):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{px(f):.2f},{py(t):.2f}" for f, t in zip(curve.fpr, curve.tpr))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        parts.append(
            f'<text x="{margin + 10}" y="{margin + 16 + 16 * i}" font-family="sans-serif" '
            f'font-size="12" fill="{color}">{label} (AUC {curve.auc:.4f})</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
