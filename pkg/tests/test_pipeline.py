import numpy as np
import pytest

from dualview.datasets import DetectionCandidate
from dualview.errors import SingleClassError, ValidationError
from dualview.model import DESK_ARCH, MatchModel
from dualview.pipeline import (
    AdjustedDetection,
    EnsembleScorer,
    NccScorer,
    PairRecord,
    StandaloneDetection,
    adjust_scores,
    enumerate_pairs,
    evaluate_pipeline,
    fp_reduction_report,
    label_candidates,
    score_pairs,
    save_adjusted,
    save_pair_records,
)
from dualview.training import Ensemble


def square(x0, y0, side):
    return [(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)]


def candidate(cid, view, poly, score=0.5, image="img", study="S"):
    return DetectionCandidate(cid, view, poly, score, image, study)


def make_scene():
    """One study: a bright blob seen in both views plus a false spot in CC."""
    rng = np.random.default_rng(0)
    img_cc = rng.normal(0.3, 0.02, size=(96, 96))
    img_mlo = rng.normal(0.3, 0.02, size=(96, 96))
    img_cc[20:44, 20:44] += 0.5  # true lesion CC
    img_mlo[50:74, 30:54] += 0.5  # same lesion MLO
    img_cc[60:76, 60:76] += 0.4  # false detection texture
    images = {"cc.png": img_cc, "mlo.png": img_mlo}
    gt_cc = square(20, 20, 24)
    gt_mlo = square(30, 50, 24)
    candidates = [
        candidate("cc_true", "CC", square(19, 19, 25), 0.9, "cc.png"),
        candidate("cc_false", "CC", square(60, 60, 16), 0.7, "cc.png"),
        candidate("mlo_true", "MLO", square(31, 51, 23), 0.8, "mlo.png"),
    ]
    gt_by_image = {"cc.png": [gt_cc], "mlo.png": [gt_mlo]}
    dims = {name: img.shape for name, img in images.items()}
    labels = label_candidates(candidates, gt_by_image, dims)
    return images, candidates, labels


def test_enumerate_full_cross_product():
    p_cc = [candidate(f"c{i}", "CC", square(0, 0, 4)) for i in range(3)]
    p_mlo = [candidate(f"m{i}", "MLO", square(0, 0, 4)) for i in range(2)]
    pairs, standalone = enumerate_pairs(p_cc, p_mlo)
    assert len(pairs) == 6
    assert standalone == []


def test_enumerate_empty_view_makes_standalones():
    p_cc = [candidate(f"c{i}", "CC", square(0, 0, 4)) for i in range(3)]
    pairs, standalone = enumerate_pairs(p_cc, [])
    assert pairs == []
    assert [c.id for c in standalone] == ["c0", "c1", "c2"]


def test_enumerate_one_by_one():
    pairs, standalone = enumerate_pairs(
        [candidate("c", "CC", square(0, 0, 4))], [candidate("m", "MLO", square(0, 0, 4))]
    )
    assert len(pairs) == 1
    assert standalone == []


def test_label_candidates_by_dice():
    _, candidates, labels = make_scene()
    assert labels == {"cc_true": 1, "cc_false": 0, "mlo_true": 1}


def test_score_pairs_labels_and_shapes():
    images, candidates, labels = make_scene()
    pairs, _ = enumerate_pairs([candidates[0], candidates[1]], [candidates[2]])
    records, skipped = score_pairs(pairs, NccScorer(), images, labels)
    assert skipped == 0
    assert len(records) + skipped == 2
    by_pair = {(r.cc_id, r.mlo_id): r for r in records}
    assert by_pair[("cc_true", "mlo_true")].label == 1  # both true lesions
    assert by_pair[("cc_false", "mlo_true")].label == 0  # one false member
    assert all(0.0 <= r.probability <= 1.0 for r in records)


def test_ncc_and_ensemble_scorers_share_record_shape():
    images, candidates, labels = make_scene()
    pairs, _ = enumerate_pairs([candidates[0]], [candidates[2]])
    ensemble_scorer = EnsembleScorer(Ensemble([MatchModel.build(DESK_ARCH, seed=0)]))
    for scorer in (NccScorer(), ensemble_scorer):
        records, skipped = score_pairs(pairs, scorer, images, labels)
        assert skipped == 0
        assert [(r.cc_id, r.mlo_id, r.label) for r in records] == [("cc_true", "mlo_true", 1)]


def test_failed_extraction_is_skipped_and_counted():
    images, candidates, labels = make_scene()
    bad = candidate("cc_offimage", "CC", square(500, 500, 10), 0.5, "cc.png")
    labels["cc_offimage"] = 0
    pairs, _ = enumerate_pairs([candidates[0], bad], [candidates[2]])
    records, skipped = score_pairs(pairs, NccScorer(), images, labels)
    assert skipped == 1
    assert len(records) + skipped == len(pairs)


# -- pipeline evaluation -------------------------------------------------------------


def records_from(spec):
    return [PairRecord(f"c{i}", f"m{i}", prob, label) for i, (prob, label) in enumerate(spec)]


def test_no_standalones_modes_agree():
    records = records_from([(0.9, 1), (0.2, 0), (0.7, 1), (0.4, 0)])
    include = evaluate_pipeline(records, "include", [])
    exclude = evaluate_pipeline(records, "exclude", [])
    np.testing.assert_array_equal(include.fpr, exclude.fpr)
    np.testing.assert_array_equal(include.tpr, exclude.tpr)
    assert include.auc == exclude.auc


def test_include_mode_appends_standalones():
    records = records_from([(0.6, 1), (0.5, 0)])
    standalones = [StandaloneDetection("s1", "CC", 0.9, 1), StandaloneDetection("s2", "MLO", 0.1, 0)]
    include = evaluate_pipeline(records, "include", standalones)
    exclude = evaluate_pipeline(records, "exclude", standalones)
    assert include.auc == 1.0  # the standalones are perfectly ranked
    assert exclude.auc == 1.0
    # the include curve must reflect two more records
    assert len(include.thresholds) > len(exclude.thresholds)


def test_perfect_scorer_gives_auc_one():
    records = records_from([(1.0, 1), (0.0, 0), (1.0, 1), (0.0, 0)])
    assert evaluate_pipeline(records, "exclude", []).auc == 1.0


def test_single_class_records_rejected():
    records = records_from([(0.9, 1), (0.8, 1)])
    with pytest.raises(SingleClassError):
        evaluate_pipeline(records, "exclude", [])


def test_unknown_mode_rejected():
    records = records_from([(0.9, 1), (0.1, 0)])
    with pytest.raises(ValidationError):
        evaluate_pipeline(records, "both", [])
    with pytest.raises(ValidationError):
        evaluate_pipeline([], "include", [])


# -- score adjustment ---------------------------------------------------------------


def adjustment_fixture():
    p_cc = [
        candidate("confirmed", "CC", square(0, 0, 4), score=0.8),
        candidate("unmatched", "CC", square(0, 0, 4), score=0.9),
    ]
    p_mlo = [candidate("partner", "MLO", square(0, 0, 4), score=0.6)]
    records = [
        PairRecord("confirmed", "partner", 0.5, 1),
        PairRecord("unmatched", "partner", 0.0, 0),
    ]
    labels = {"confirmed": 1, "unmatched": 0, "partner": 1}
    return p_cc, p_mlo, records, labels


def test_adjusted_score_is_original_times_best_match():
    p_cc, p_mlo, records, labels = adjustment_fixture()
    adjusted = {a.id: a for a in adjust_scores(p_cc, p_mlo, records, "include", labels)}
    np.testing.assert_allclose(adjusted["confirmed"].adjusted, 0.8 * 0.5)
    assert adjusted["unmatched"].adjusted == 0.0
    np.testing.assert_allclose(adjusted["partner"].adjusted, 0.6 * 0.5)
    assert not adjusted["confirmed"].standalone


def test_best_match_one_keeps_original():
    p_cc = [candidate("c", "CC", square(0, 0, 4), score=0.7)]
    p_mlo = [candidate("m", "MLO", square(0, 0, 4), score=0.4)]
    records = [PairRecord("c", "m", 1.0, 1)]
    adjusted = {a.id: a for a in adjust_scores(p_cc, p_mlo, records, "include", {"c": 1, "m": 1})}
    assert adjusted["c"].adjusted == 0.7
    assert adjusted["m"].adjusted == 0.4


def test_standalone_passthrough_and_omission():
    alone = [candidate("s", "CC", square(0, 0, 4), score=0.65)]
    paired_cc = [candidate("c", "CC", square(0, 0, 4), score=0.5)]
    paired_mlo = [candidate("m", "MLO", square(0, 0, 4), score=0.5)]
    records = [PairRecord("c", "m", 0.5, 1)]
    labels = {"s": 1, "c": 1, "m": 1}
    include = {a.id: a for a in adjust_scores(alone + paired_cc, paired_mlo, records, "include", labels)}
    exclude = {a.id: a for a in adjust_scores(alone + paired_cc, paired_mlo, records, "exclude", labels)}
    assert include["s"].standalone and include["s"].adjusted == 0.65
    assert exclude["s"].adjusted == 0.0
    assert include["c"].adjusted == exclude["c"].adjusted  # pairing unaffected


def test_adjustment_never_increases_scores():
    rng = np.random.default_rng(1)
    p_cc = [candidate(f"c{i}", "CC", square(0, 0, 4), score=float(rng.random())) for i in range(6)]
    p_mlo = [candidate(f"m{i}", "MLO", square(0, 0, 4), score=float(rng.random())) for i in range(4)]
    records = [
        PairRecord(c.id, m.id, float(rng.random()), int(rng.integers(0, 2)))
        for c in p_cc
        for m in p_mlo
    ]
    labels = {c.id: 1 for c in p_cc + p_mlo}
    for adj in adjust_scores(p_cc, p_mlo, records, "include", labels):
        assert adj.adjusted <= adj.original + 1e-15


# -- false-positive reduction --------------------------------------------------------


def adjusted_fixture():
    return [
        AdjustedDetection("t1", "CC", 0.9, 0.85, False, 1),
        AdjustedDetection("t2", "MLO", 0.8, 0.75, False, 1),
        AdjustedDetection("f1", "CC", 0.7, 0.05, False, 0),
        AdjustedDetection("f2", "MLO", 0.6, 0.30, False, 0),
    ]


def test_threshold_zero_removes_nothing():
    report = fp_reduction_report(adjusted_fixture(), 0.0)
    assert report.sensitivity == 1.0
    assert report.removed_false == 0


def test_threshold_above_everything_removes_all():
    report = fp_reduction_report(adjusted_fixture(), 2.0)
    assert report.sensitivity == 0.0
    assert report.removed_false == 2
    assert report.specificity == 1.0


def test_intermediate_threshold_counts():
    report = fp_reduction_report(adjusted_fixture(), 0.5)
    assert report.retained_true == 2
    assert report.removed_false == 2
    assert report.sensitivity == 1.0
    assert report.specificity == 1.0


def test_record_csv_exports(tmp_path):
    records = records_from([(0.9, 1), (0.1, 0)])
    save_pair_records(records, tmp_path / "pairs.csv")
    text = (tmp_path / "pairs.csv").read_text().splitlines()
    assert text[0] == "cc_id,mlo_id,probability,label"
    assert len(text) == 3
    save_adjusted(adjusted_fixture(), tmp_path / "adjusted.csv")
    text = (tmp_path / "adjusted.csv").read_text().splitlines()
    assert text[0] == "id,view,original,adjusted,standalone,label"
    assert len(text) == 5
