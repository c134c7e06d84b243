"""Dual-view patch correspondence.

A self-contained matcher for paired-view detection candidates: a two-tower
convolutional network with a shared feature tower (built on the package's
own float64 autodiff core), a normalized-cross-correlation baseline, Dice
contour labeling, balanced two-member ensembling, ROC/AUC evaluation, and a
candidate-filtering pipeline that down-weights detections with no match in
the opposite view.
"""

from .adam import AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import (
    DetectionCandidate,
    GroundTruthLesion,
    PatchPair,
    PatchRecord,
    SplitManifest,
    ingest_patch_grid,
    make_training_pairs,
    split_by_patient,
)
from .evaluation import RocCurve, auc_oracle, operating_point, roc
from .geometry import dice, label_candidate, rasterize_polygon
from .model import ARCH_PRESETS, DESK_ARCH, PAPER_ARCH, ArchConfig, LayerSpec, MatchModel
from .ncc import NccScore, ncc, ncc_score_dataset
from .patches import augment, extract_patch, normalize_patch
from .synth import SynthConfig, generate_dataset
from .tensor import Tensor, no_grad
from .training import (
    Ensemble,
    TrainConfig,
    apply_freeze_preset,
    balanced_sample,
    predict,
    train,
    train_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "adam_step",
    "load_checkpoint",
    "save_checkpoint",
    "DetectionCandidate",
    "GroundTruthLesion",
    "PatchPair",
    "PatchRecord",
    "SplitManifest",
    "ingest_patch_grid",
    "make_training_pairs",
    "split_by_patient",
    "RocCurve",
    "auc_oracle",
    "operating_point",
    "roc",
    "dice",
    "label_candidate",
    "rasterize_polygon",
    "ARCH_PRESETS",
    "DESK_ARCH",
    "PAPER_ARCH",
    "ArchConfig",
    "LayerSpec",
    "MatchModel",
    "NccScore",
    "ncc",
    "ncc_score_dataset",
    "augment",
    "extract_patch",
    "normalize_patch",
    "SynthConfig",
    "generate_dataset",
    "Tensor",
    "no_grad",
    "Ensemble",
    "TrainConfig",
    "apply_freeze_preset",
    "balanced_sample",
    "predict",
    "train",
    "train_ensemble",
    "__version__",
]
