"""Shared fixtures.

The ``benchmark`` fixture is the expensive one: it generates the default
full-scale synthetic dataset, trains the two-member ensemble on the train
split with the documented recipe, and scores both the ensemble and the NCC
baseline.  It is session-scoped and lazy, so unit-test runs that do not
touch it stay fast.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from dualview.datasets import (
    MatcherCorpus,
    PatchPair,
    SplitManifest,
    load_lesions,
    load_matcher_corpus,
    make_training_pairs,
    split_by_patient,
)
from dualview.checkpoint import save_checkpoint
from dualview.model import DESK_ARCH
from dualview.ncc import ncc_score_dataset
from dualview.patches import bilinear_resize, normalize_patch
from dualview.synth import SynthConfig, generate_dataset
from dualview.training import (
    Ensemble,
    TrainConfig,
    score_pairs_with_ensemble,
    train_ensemble,
)

BENCH_SEED = 42
BENCH_RECIPE = dict(lr=3e-3, batch_size=256, epochs=8, seed=BENCH_SEED, ensemble_size=2)


def make_overfit_pairs(seed: int = 3, n: int = 10) -> list[PatchPair]:
    """The 10-pair overfit set: smooth random patterns, positives are noisy
    re-renderings, negatives are mismatched identities."""
    rng = np.random.default_rng(seed)

    def blob():
        base = bilinear_resize(rng.normal(size=(8, 8)), 64, 64)
        return normalize_patch(base + 0.1 * rng.normal(size=(64, 64)))[0]

    patches = [blob() for _ in range(n)]
    pairs = []
    for i, patch in enumerate(patches):
        partner = normalize_patch(patch + 0.2 * rng.normal(size=(64, 64)))[0]
        pairs.append(PatchPair(patch, partner, 1, f"p{i}", f"p{i}"))
    for i in range(n):
        j = (i + 3) % n
        pairs.append(PatchPair(patches[i], patches[j], 0, f"p{i}", f"p{j}"))
    return pairs


@dataclass
class Benchmark:
    dataset_dir: Path
    run_dir: Path
    manifest: SplitManifest
    ensemble: Ensemble
    checkpoints: list[Path]
    train_corpus: MatcherCorpus
    test_corpus: MatcherCorpus
    train_base: list[PatchPair]
    test_pairs: list[PatchPair]
    ncc_test_scores: list[tuple[float, int]]
    ensemble_test_scores: list[tuple[float, int]]
    ensemble_train_scores: list[tuple[float, int]]
    wall_seconds: float


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory) -> Benchmark:
    root = tmp_path_factory.mktemp("bench")
    dataset_dir = root / "data"
    run_dir = root / "run"
    run_dir.mkdir()

    t0 = time.perf_counter()
    generate_dataset(SynthConfig(seed=BENCH_SEED), dataset_dir)  # cmd_synth defaults
    lesions = load_lesions(dataset_dir / "lesions.jsonl")
    manifest = split_by_patient([l.patient for l in lesions], ratio=0.8, seed=BENCH_SEED)
    train_corpus = load_matcher_corpus(dataset_dir, patients=set(manifest.patients("train")))
    test_corpus = load_matcher_corpus(dataset_dir, patients=set(manifest.patients("test")))

    train_aug = make_training_pairs(
        train_corpus.positives,
        train_corpus.false_detections,
        train_corpus.annotated,
        augment_pairs=True,
        same_study_only=True,
    )
    positives = [p for p in train_aug if p.label == 1]
    negatives = [p for p in train_aug if p.label == 0]
    config = TrainConfig(**BENCH_RECIPE)
    ensemble, _ = train_ensemble(positives, negatives, config, DESK_ARCH, run_dir=run_dir)
    checkpoints = []
    for index, member in enumerate(ensemble.members):
        path = run_dir / f"member_{index}.ckpt"
        save_checkpoint(member, path, seed=BENCH_SEED)
        checkpoints.append(path)

    train_base = make_training_pairs(
        train_corpus.positives,
        train_corpus.false_detections,
        train_corpus.annotated,
        augment_pairs=False,
        same_study_only=True,
    )
    test_pairs = make_training_pairs(
        test_corpus.positives,
        test_corpus.false_detections,
        test_corpus.annotated,
        augment_pairs=False,
        same_study_only=True,
    )
    ensemble_train_scores = score_pairs_with_ensemble(ensemble, train_base)
    ensemble_test_scores = score_pairs_with_ensemble(ensemble, test_pairs)
    wall = time.perf_counter() - t0
    ncc_test_scores = ncc_score_dataset(test_pairs)

    return Benchmark(
        dataset_dir=dataset_dir,
        run_dir=run_dir,
        manifest=manifest,
        ensemble=ensemble,
        checkpoints=checkpoints,
        train_corpus=train_corpus,
        test_corpus=test_corpus,
        train_base=train_base,
        test_pairs=test_pairs,
        ncc_test_scores=ncc_test_scores,
        ensemble_test_scores=ensemble_test_scores,
        ensemble_train_scores=ensemble_train_scores,
        wall_seconds=wall,
    )
