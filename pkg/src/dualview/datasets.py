"""Dataset records, manifest files, pair building, and splits.

Manifests are JSON Lines: one object per record.

    candidates.jsonl  {"id", "view", "polygon": [[x, y], ...], "score",
                       "image", "study"}
    lesions.jsonl     {"id", "view", "polygon", "patient", "image", "study"}

``image`` is a path relative to the dataset directory; ``study`` groups the
CC/MLO images of one breast; lesions of the same physical mass carry the
same ``id`` in both views, which is how positive pairs are formed.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ValidationError
from .geometry import DICE_DELTA, label_candidate
from .patches import augment, extract_patch, normalize_patch
from .rng import stream

VIEWS = ("CC", "MLO")

GRID_IMAGE_SIZE = 1024
GRID_PATCHES_PER_SIDE = 16
GRID_PATCH_SIZE = 64


# -- records -----------------------------------------------------------------


@dataclass
class DetectionCandidate:
    id: str
    view: str
    polygon: list[tuple[float, float]]
    score: float
    image: str = ""
    study: str = ""


@dataclass
class GroundTruthLesion:
    id: str
    view: str
    polygon: list[tuple[float, float]]
    patient: str
    image: str = ""
    study: str = ""


@dataclass
class PatchRecord:
    """One extracted, normalized patch with provenance."""

    id: str
    view: str
    patch: np.ndarray  # [64, 64] normalized
    study: str = ""


@dataclass
class PatchPair:
    patch_a: np.ndarray  # [64, 64], CC side under the fixed ordering
    patch_b: np.ndarray  # [64, 64], MLO side
    label: int  # 1 = match
    a_id: str = ""
    b_id: str = ""
    aug_a: str = "r0"
    aug_b: str = "r0"


@dataclass
class SplitManifest:
    assignments: dict[str, str]  # patient -> "train" | "test"

    def patients(self, split: str) -> list[str]:
        return sorted(p for p, s in self.assignments.items() if s == split)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.assignments, sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SplitManifest":
        return cls(json.loads(Path(path).read_text()))


# -- manifest I/O --------------------------------------------------------------


def _dump_jsonl(records: list[dict], path) -> None:
    lines = [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _load_jsonl(path, required: tuple[str, ...]) -> list[dict]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        missing = [k for k in required if k not in obj]
        if missing:
            raise FormatError(f"{path}:{lineno}: missing fields {missing}")
        out.append(obj)
    return out


def save_candidates(candidates: list[DetectionCandidate], path) -> None:
    _dump_jsonl(
        [
            {
                "id": c.id,
                "view": c.view,
                "polygon": [[float(x), float(y)] for x, y in c.polygon],
                "score": float(c.score),
                "image": c.image,
                "study": c.study,
            }
            for c in candidates
        ],
        path,
    )


def load_candidates(path) -> list[DetectionCandidate]:
    rows = _load_jsonl(path, ("id", "view", "polygon", "score"))
    return [
        DetectionCandidate(
            id=str(r["id"]),
            view=r["view"],
            polygon=[(float(x), float(y)) for x, y in r["polygon"]],
            score=float(r["score"]),
            image=r.get("image", ""),
            study=r.get("study", ""),
        )
        for r in rows
    ]


def save_lesions(lesions: list[GroundTruthLesion], path) -> None:
    _dump_jsonl(
        [
            {
                "id": les.id,
                "view": les.view,
                "polygon": [[float(x), float(y)] for x, y in les.polygon],
                "patient": les.patient,
                "image": les.image,
                "study": les.study,
            }
            for les in lesions
        ],
        path,
    )


def load_lesions(path) -> list[GroundTruthLesion]:
    rows = _load_jsonl(path, ("id", "view", "polygon", "patient"))
    return [
        GroundTruthLesion(
            id=str(r["id"]),
            view=r["view"],
            polygon=[(float(x), float(y)) for x, y in r["polygon"]],
            patient=str(r["patient"]),
            image=r.get("image", ""),
            study=r.get("study", ""),
        )
        for r in rows
    ]


def load_image(path) -> np.ndarray:
    """Grayscale image as float64 in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float64) / 65535.0
    return arr.astype(np.float64)


# -- pair building --------------------------------------------------------------


def polygon_bbox(polygon) -> tuple[float, float, float, float]:
    pts = np.asarray(polygon, dtype=np.float64)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return float(x0), float(y0), float(x1 - x0), float(y1 - y0)


def make_training_pairs(
    positives: list[tuple[PatchRecord, PatchRecord]],
    false_detections: list[PatchRecord],
    annotated: list[PatchRecord],
    augment_pairs: bool = True,
    same_study_only: bool = False,
) -> list[PatchPair]:
    """Labeled pairs from matched lesions plus false-detection negatives.

    Positive base pairs are the matched (CC, MLO) lesion patches; negative
    base pairs cross every false detection with every annotated lesion patch
    from the *other* view (restricted to the same study when
    ``same_study_only`` is set, which is what the trainer uses).  With
    augmentation on, every base pair expands into the 8x8 cross product of
    dihedral variants of its two patches.
    """
    if not positives:
        raise ValidationError("make_training_pairs: no positive pairs")

    def order(rec_1: PatchRecord, rec_2: PatchRecord) -> tuple[PatchRecord, PatchRecord]:
        if rec_1.view == "MLO" and rec_2.view == "CC":
            return rec_2, rec_1
        return rec_1, rec_2

    base: list[tuple[PatchRecord, PatchRecord, int]] = []
    for rec_a, rec_b in positives:
        a, b = order(rec_a, rec_b)
        base.append((a, b, 1))
    for false_rec in false_detections:
        for gt_rec in annotated:
            if gt_rec.view == false_rec.view:
                continue
            if same_study_only and gt_rec.study != false_rec.study:
                continue
            a, b = order(false_rec, gt_rec)
            base.append((a, b, 0))

    pairs: list[PatchPair] = []
    for a, b, label in base:
        if augment_pairs:
            for tag_a, var_a in augment(a.patch):
                for tag_b, var_b in augment(b.patch):
                    pairs.append(PatchPair(var_a, var_b, label, a.id, b.id, tag_a, tag_b))
        else:
            pairs.append(PatchPair(a.patch, b.patch, label, a.id, b.id))
    return pairs


# -- patch-grid ingestion --------------------------------------------------------


def ingest_patch_grid(bitmap_dir, info_file) -> tuple[list[np.ndarray], list[int]]:
    """Read a grid-of-patches dataset.

    ``bitmap_dir`` holds 1024x1024 bitmaps, each a 16x16 array of 64x64
    patches in row-major order; ``info_file`` has one line per patch whose
    first token is an integer correspondence key (patches sharing a key
    depict the same point).  Returns (patches, keys) in file order.
    """
    bitmap_dir = Path(bitmap_dir)
    files = sorted(
        p for p in bitmap_dir.iterdir() if p.suffix.lower() in (".bmp", ".png")
    )
    lines = [ln for ln in Path(info_file).read_text().splitlines() if ln.strip()]
    if not lines:
        warnings.warn(f"{info_file}: empty info file, dataset is empty")
        return [], []
    keys = []
    for lineno, line in enumerate(lines, start=1):
        token = line.split()[0]
        try:
            keys.append(int(token))
        except ValueError as exc:
            raise FormatError(f"{info_file}:{lineno}: key {token!r} is not an integer") from exc

    per_image = GRID_PATCHES_PER_SIDE * GRID_PATCHES_PER_SIDE
    patches: list[np.ndarray] = []
    for path in files:
        grid = load_image(path)
        if grid.shape != (GRID_IMAGE_SIZE, GRID_IMAGE_SIZE):
            raise FormatError(f"{path}: expected {GRID_IMAGE_SIZE}x{GRID_IMAGE_SIZE}, got {grid.shape}")
        for row in range(GRID_PATCHES_PER_SIDE):
            for col in range(GRID_PATCHES_PER_SIDE):
                r0 = row * GRID_PATCH_SIZE
                c0 = col * GRID_PATCH_SIZE
                patches.append(grid[r0 : r0 + GRID_PATCH_SIZE, c0 : c0 + GRID_PATCH_SIZE])
        if len(patches) >= len(keys):
            break
    if len(keys) > len(files) * per_image:
        raise FormatError(
            f"{info_file}: {len(keys)} keys but bitmaps only hold {len(files) * per_image} patches"
        )
    return patches[: len(keys)], keys


def enumerate_grid_pairs(
    keys: list[int],
    max_negatives: int | None = None,
    seed: int = 0,
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(positive, negative) index pairs: same key vs different key."""
    by_key: dict[int, list[int]] = {}
    for idx, key in enumerate(keys):
        by_key.setdefault(key, []).append(idx)
    positives = [
        pair for group in by_key.values() for pair in itertools.combinations(group, 2)
    ]
    negatives = [
        (i, j)
        for i, j in itertools.combinations(range(len(keys)), 2)
        if keys[i] != keys[j]
    ]
    if max_negatives is not None and len(negatives) > max_negatives:
        rng = stream(seed, "grid-negatives")
        picked = rng.choice(len(negatives), size=max_negatives, replace=False)
        negatives = [negatives[i] for i in sorted(picked)]
    return positives, negatives


# -- splits -----------------------------------------------------------------------


def split_by_patient(patients, ratio: float = 0.8, seed: int = 0) -> SplitManifest:
    """Patient-wise split: shuffled patients, first ceil(ratio*P) to train."""
    unique = sorted(set(patients))
    rng = stream(seed, "split")
    order = rng.permutation(len(unique))
    n_train = math.ceil(ratio * len(unique))
    assignments = {}
    for rank, idx in enumerate(order):
        assignments[unique[idx]] = "train" if rank < n_train else "test"
    return SplitManifest(assignments)


# -- whole-dataset assembly ---------------------------------------------------------


@dataclass
class MatcherCorpus:
    """Everything the trainer and scorers need from one dataset directory."""

    positives: list[tuple[PatchRecord, PatchRecord]]
    false_detections: list[PatchRecord]
    annotated: list[PatchRecord]
    lesions: list[GroundTruthLesion] = field(default_factory=list)
    candidates: list[DetectionCandidate] = field(default_factory=list)


def load_matcher_corpus(
    dataset_dir,
    patients: set[str] | None = None,
    delta: float = DICE_DELTA,
) -> MatcherCorpus:
    """Build matched lesion pairs and negative sources from a dataset dir.

    Positives: lesions sharing an id across the two views of a study.
    Negative sources: candidates whose Dice label against same-view ground
    truth is false, paired downstream with annotated lesions of the other
    view.  ``patients`` (if given) restricts everything to those patients.
    """
    dataset_dir = Path(dataset_dir)
    lesions = load_lesions(dataset_dir / "lesions.jsonl")
    candidates = load_candidates(dataset_dir / "candidates.jsonl")
    if patients is not None:
        lesions = [l for l in lesions if l.patient in patients]
        studies = {l.study for l in lesions}
        candidates = [c for c in candidates if c.study in studies]

    images: dict[str, np.ndarray] = {}

    def image_for(rel: str) -> np.ndarray:
        if rel not in images:
            images[rel] = load_image(dataset_dir / rel)
        return images[rel]

    def patch_for(polygon, image_rel: str) -> np.ndarray:
        patch = extract_patch(image_for(image_rel), polygon_bbox(polygon))[0]
        normalized, _ = normalize_patch(patch)
        return normalized

    annotated: list[PatchRecord] = []
    by_study_id: dict[tuple[str, str], dict[str, PatchRecord]] = {}
    for lesion in lesions:
        rec = PatchRecord(
            id=lesion.id,
            view=lesion.view,
            patch=patch_for(lesion.polygon, lesion.image),
            study=lesion.study,
        )
        annotated.append(rec)
        by_study_id.setdefault((lesion.study, lesion.id), {})[lesion.view] = rec

    positives = [
        (views["CC"], views["MLO"])
        for views in by_study_id.values()
        if "CC" in views and "MLO" in views
    ]

    gt_by_image: dict[str, list] = {}
    dims_by_image: dict[str, tuple[int, int]] = {}
    for lesion in lesions:
        gt_by_image.setdefault(lesion.image, []).append(lesion.polygon)
    false_detections: list[PatchRecord] = []
    for cand in candidates:
        image = image_for(cand.image)
        dims_by_image[cand.image] = image.shape
        is_true = label_candidate(
            cand.polygon, gt_by_image.get(cand.image, []), image.shape, delta=delta
        )
        if not is_true:
            false_detections.append(
                PatchRecord(
                    id=cand.id,
                    view=cand.view,
                    patch=patch_for(cand.polygon, cand.image),
                    study=cand.study,
                )
            )
    return MatcherCorpus(positives, false_detections, annotated, lesions, candidates)
