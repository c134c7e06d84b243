"""Synthetic dual-view dataset generator.

Each "patient" gets a CC and an MLO image: smooth-noise background, a few
bright blob lesions, and some distractor blobs.  A lesion is one blob
identity (its own contour shape and interior texture) rendered into both
views; the MLO rendering applies a random rotation, anisotropic stretch of
up to the configured fraction per axis, an intensity change, and the views
get independent backgrounds and pixel noise.  Distractors are separate blob
identities rendered into a single view only.

Alongside the images the generator emits the ground-truth lesion manifest
and a planted detection-candidate manifest: candidates on lesions (jittered
contours, so their Dice label is true) plus candidates on distractors
(false detections).  A configurable fraction of studies drops all
candidates from one view, producing standalone detections for the pipeline.

Everything is drawn from per-study streams of the root seed, so a dataset
is a pure function of its config.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .datasets import DetectionCandidate, GroundTruthLesion, save_candidates, save_lesions
from .patches import bilinear_resize
from .rng import stream

VIEWS = ("CC", "MLO")
_TEXTURE_TILE = 25
_CONTOUR_POINTS = 24


@dataclass(frozen=True)
class SynthConfig:
    pairs: int = 200
    lesions_per_patient: int = 1
    image_size: int = 256
    false_per_view: int = 2
    drop_view_prob: float = 0.1
    rotation_deg: float = 55.0
    stretch: float = 0.20
    intensity_shift: float = 0.15
    noise_sigma: float = 0.02
    texture_amp: float = 0.30
    seed: int = 0

    @property
    def patients(self) -> int:
        return math.ceil(self.pairs / self.lesions_per_patient)


@dataclass
class _Blob:
    radius: float
    coeffs: np.ndarray
    phases: np.ndarray
    brightness: float
    texture: np.ndarray  # zero-mean tile sampled in the blob's local frame

    def radius_at(self, theta: np.ndarray) -> np.ndarray:
        r = np.ones_like(theta)
        for k, (amp, phase) in enumerate(zip(self.coeffs, self.phases)):
            r = r + amp * np.cos((k + 2) * theta + phase)
        return np.maximum(r, 0.3) * self.radius

    @property
    def reach(self) -> float:
        return float(self.radius * (1.0 + self.coeffs.sum()))


def _smooth_noise(rng: np.random.Generator, size: int, coarse: int, amp: float) -> np.ndarray:
    return amp * bilinear_resize(rng.normal(size=(coarse, coarse)), size, size)


def _make_blob(rng: np.random.Generator, config: SynthConfig) -> _Blob:
    tile = _smooth_noise(rng, _TEXTURE_TILE, coarse=7, amp=1.0)
    tile -= tile.mean()
    spread = tile.std()
    if spread > 1e-12:
        tile *= config.texture_amp / spread
    return _Blob(
        radius=float(rng.uniform(10.0, 20.0)),
        coeffs=rng.uniform(0.0, 0.30, size=3),
        phases=rng.uniform(0.0, 2.0 * np.pi, size=3),
        brightness=float(rng.uniform(0.34, 0.46)),
        texture=tile,
    )


def _sample_bilinear(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rows - r0
    fc = cols - c0
    return (
        arr[r0, c0] * (1 - fr) * (1 - fc)
        + arr[r0, c1] * (1 - fr) * fc
        + arr[r1, c0] * fr * (1 - fc)
        + arr[r1, c1] * fr * fc
    )


def _contour(
    blob: _Blob,
    center: tuple[float, float],
    rotation: float,
    scale: tuple[float, float],
    jitter_rng: np.random.Generator | None = None,
    jitter: float = 0.0,
) -> list[tuple[float, float]]:
    theta = np.linspace(0.0, 2.0 * np.pi, _CONTOUR_POINTS, endpoint=False)
    r = blob.radius_at(theta)
    cx, cy = center
    if jitter_rng is not None and jitter > 0:
        r = r * (1.0 + jitter_rng.uniform(-jitter, jitter, size=theta.size))
        cx += float(jitter_rng.uniform(-2.0, 2.0))
        cy += float(jitter_rng.uniform(-2.0, 2.0))
    lx, ly = r * np.cos(theta), r * np.sin(theta)
    sx, sy = scale
    ca, sa = math.cos(rotation), math.sin(rotation)
    x = cx + ca * sx * lx - sa * sy * ly
    y = cy + sa * sx * lx + ca * sy * ly
    return list(zip(x.tolist(), y.tolist()))


def _render_blob(
    image: np.ndarray,
    blob: _Blob,
    center: tuple[float, float],
    rotation: float,
    scale: tuple[float, float],
    gain: float,
) -> None:
    size = image.shape[0]
    cx, cy = center
    sx, sy = scale
    reach = blob.reach * max(sx, sy) + 2.0
    x0, x1 = max(int(cx - reach), 0), min(int(cx + reach) + 1, size)
    y0, y1 = max(int(cy - reach), 0), min(int(cy + reach) + 1, size)
    if x1 <= x0 or y1 <= y0:
        return
    xx = np.arange(x0, x1)[None, :] + 0.5 - cx
    yy = np.arange(y0, y1)[:, None] + 0.5 - cy
    ca, sa = math.cos(rotation), math.sin(rotation)
    lx = (ca * xx + sa * yy) / sx
    ly = (-sa * xx + ca * yy) / sy
    lr = np.hypot(lx, ly)
    ltheta = np.arctan2(ly, lx)
    r_edge = blob.radius_at(ltheta)
    falloff = np.clip((r_edge - lr) / (0.25 * blob.radius), 0.0, 1.0)
    span = blob.reach
    rows = np.clip((ly / span + 1.0) / 2.0 * (_TEXTURE_TILE - 1), 0, _TEXTURE_TILE - 1)
    cols = np.clip((lx / span + 1.0) / 2.0 * (_TEXTURE_TILE - 1), 0, _TEXTURE_TILE - 1)
    tex = _sample_bilinear(blob.texture, rows, cols)
    image[y0:y1, x0:x1] += gain * falloff * (blob.brightness + tex)


class _Placer:
    """Rejection-samples blob centers so instances stay disjoint."""

    def __init__(self, rng: np.random.Generator, size: int):
        self.rng = rng
        self.size = size
        self.placed: dict[str, list[tuple[float, float, float]]] = {v: [] for v in VIEWS}

    def place(self, view: str, reach: float) -> tuple[float, float]:
        margin = reach + 4.0
        for _ in range(300):
            cx, cy = self.rng.uniform(margin, self.size - margin, size=2)
            ok = all(
                np.hypot(cx - ox, cy - oy) > reach + other + 6.0
                for ox, oy, other in self.placed[view]
            )
            if ok:
                self.placed[view].append((float(cx), float(cy), reach))
                return float(cx), float(cy)
        # crowded image: accept the last draw rather than fail the run
        self.placed[view].append((float(cx), float(cy), reach))
        return float(cx), float(cy)


def _generate_study(config: SynthConfig, patient_index: int, n_lesions: int):
    rng = stream(config.seed, "study", patient_index)
    study = f"P{patient_index:03d}"
    size = config.image_size
    images = {
        view: 0.35 + _smooth_noise(rng, size, coarse=9, amp=0.06) for view in VIEWS
    }
    placer = _Placer(rng, size)
    lesions: list[GroundTruthLesion] = []
    candidates: list[DetectionCandidate] = []

    for li in range(n_lesions):
        blob = _make_blob(rng, config)
        base = float(rng.uniform(0.0, 2.0 * np.pi))
        delta = math.radians(float(rng.uniform(-config.rotation_deg, config.rotation_deg)))
        # the view deformations trade off: a strongly rotated counterpart is
        # stretched less, so the joint deformation stays physically plausible
        stretch = config.stretch * (1.0 - 0.5 * abs(delta) / math.radians(max(config.rotation_deg, 1e-9)))
        sx, sy = rng.uniform(1.0 - stretch, 1.0 + stretch, size=2)
        gain = 1.0 + float(rng.uniform(-config.intensity_shift, config.intensity_shift))
        lesion_id = f"{study}_L{li}"
        poses = {
            "CC": (placer.place("CC", blob.reach), base, (1.0, 1.0), 1.0),
            "MLO": (placer.place("MLO", blob.reach * max(sx, sy)), base + delta, (float(sx), float(sy)), gain),
        }
        for view, (center, rotation, scale, view_gain) in poses.items():
            _render_blob(images[view], blob, center, rotation, scale, view_gain)
            polygon = _contour(blob, center, rotation, scale)
            image_rel = f"images/{study}_{view}.png"
            lesions.append(
                GroundTruthLesion(lesion_id, view, polygon, study, image_rel, study)
            )
            candidates.append(
                DetectionCandidate(
                    id=f"{study}_{view}_T{li}",
                    view=view,
                    polygon=_contour(blob, center, rotation, scale, jitter_rng=rng, jitter=0.08),
                    score=float(rng.uniform(0.55, 0.98)),
                    image=image_rel,
                    study=study,
                )
            )

    for view in VIEWS:
        for fi in range(config.false_per_view):
            distractor = _make_blob(rng, config)
            center = placer.place(view, distractor.reach)
            rotation = float(rng.uniform(0.0, 2.0 * np.pi))
            _render_blob(images[view], distractor, center, rotation, (1.0, 1.0), 1.0)
            candidates.append(
                DetectionCandidate(
                    id=f"{study}_{view}_F{fi}",
                    view=view,
                    polygon=_contour(
                        distractor, center, rotation, (1.0, 1.0), jitter_rng=rng, jitter=0.08
                    ),
                    score=float(rng.uniform(0.30, 0.85)),
                    image=f"images/{study}_{view}.png",
                    study=study,
                )
            )

    for view in VIEWS:
        images[view] += rng.normal(0.0, config.noise_sigma, size=(size, size))
        np.clip(images[view], 0.0, 1.0, out=images[view])

    # some studies only get detections in one view (the other detector came
    # up empty there), which is what produces standalone candidates
    if rng.random() < config.drop_view_prob:
        dropped = "CC" if rng.random() < 0.5 else "MLO"
        candidates = [c for c in candidates if c.view != dropped]

    return study, images, lesions, candidates


def _save_png(image: np.ndarray, path: Path) -> None:
    data = (np.clip(image, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)
    Image.fromarray(data).save(path)


def generate_dataset(config: SynthConfig, out_dir) -> dict:
    """Write images + manifests + meta.json; returns summary counts."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    all_lesions: list[GroundTruthLesion] = []
    all_candidates: list[DetectionCandidate] = []
    remaining = config.pairs
    for patient_index in range(config.patients):
        n_lesions = min(config.lesions_per_patient, remaining)
        remaining -= n_lesions
        study, images, lesions, candidates = _generate_study(config, patient_index, n_lesions)
        for view, image in images.items():
            _save_png(image, out / "images" / f"{study}_{view}.png")
        all_lesions.extend(lesions)
        all_candidates.extend(candidates)

    save_lesions(all_lesions, out / "lesions.jsonl")
    save_candidates(all_candidates, out / "candidates.jsonl")
    summary = {
        "config": asdict(config),
        "patients": config.patients,
        "lesion_pairs": config.pairs,
        "lesion_records": len(all_lesions),
        "candidates": len(all_candidates),
    }
    (out / "meta.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return summary
