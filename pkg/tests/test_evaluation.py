import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualview.errors import SingleClassError, ValidationError
from dualview.evaluation import (
    auc_oracle,
    load_roc_csv,
    operating_point,
    roc,
    save_roc_csv,
    save_roc_svg,
    save_summary,
)


def scored(values, labels):
    return list(zip(values, labels))


def random_scores(seed, n=200, ties=False):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, n // 4 if ties else 10**9, size=n).astype(float)
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    return scored(values, labels)


def test_perfect_separation_auc_one():
    data = scored([1.0] * 5 + [0.0] * 5, [1] * 5 + [0] * 5)
    assert roc(data).auc == 1.0


def test_all_tied_scores_auc_half():
    data = scored([0.3] * 8, [1, 0, 1, 0, 1, 0, 1, 0])
    curve = roc(data)
    assert curve.auc == 0.5
    # single diagonal step: (0,0) then (1,1)
    assert curve.fpr.tolist() == [0.0, 1.0]
    assert curve.tpr.tolist() == [0.0, 1.0]


def test_hand_case_auc_three_quarters():
    data = scored([0.9, 0.8, 0.7, 0.3], [1, 0, 1, 0])
    assert roc(data).auc == 0.75
    assert auc_oracle(data) == 0.75


def test_curve_structure_invariants():
    data = random_scores(0, ties=True)
    curve = roc(data)
    assert curve.thresholds[0] == np.inf
    assert (np.diff(curve.thresholds) < 0).all()
    assert (np.diff(curve.fpr) >= 0).all()
    assert (np.diff(curve.tpr) >= 0).all()
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)


def test_oracle_extremes():
    perfect = scored([1, 1, 0, 0], [1, 1, 0, 0])
    reversed_ = scored([0, 0, 1, 1], [1, 1, 0, 0])
    assert auc_oracle(perfect) == 1.0
    assert auc_oracle(reversed_) == 0.0


def test_trapezoid_equals_mann_whitney_on_large_random_set():
    data = random_scores(1, n=1000, ties=True)
    assert abs(roc(data).auc - auc_oracle(data)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_trapezoid_equals_mann_whitney(seed):
    data = random_scores(seed, n=80, ties=True)
    assert abs(roc(data).auc - auc_oracle(data)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_auc_invariant_under_strictly_increasing_transforms(seed):
    rng = np.random.default_rng(seed)
    # distinct small integers: cubing stays exact and order-preserving
    values = rng.permutation(200)[:60].astype(float)
    labels = rng.integers(0, 2, size=60)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    base = roc(scored(values, labels)).auc
    cubed = roc(scored(values**3, labels)).auc
    remapped = roc(scored((values + 1.0) / 2.0, labels)).auc
    assert base == cubed == remapped


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_label_swap_mirrors_auc(seed):
    data = random_scores(seed, n=60, ties=True)
    swapped = [(v, 1 - lab) for v, lab in data]
    assert abs(roc(data).auc - (1.0 - roc(swapped).auc)) < 1e-12


def test_single_class_rejected():
    with pytest.raises(SingleClassError):
        roc(scored([0.5, 0.7], [1, 1]))
    with pytest.raises(SingleClassError):
        auc_oracle(scored([0.5, 0.7], [0, 0]))


def test_bad_labels_rejected():
    with pytest.raises(ValidationError):
        roc(scored([0.5, 0.7], [2, 0]))


def test_operating_point_perfect_classifier():
    data = scored([1.0] * 5 + [0.0] * 5, [1] * 5 + [0] * 5)
    threshold, sensitivity, specificity = operating_point(roc(data), 0.99)
    assert sensitivity >= 0.99
    assert specificity == 1.0
    assert threshold == 1.0


def test_operating_point_all_ties():
    data = scored([0.5] * 6, [1, 1, 1, 0, 0, 0])
    _, sensitivity, specificity = operating_point(roc(data), 0.99)
    assert sensitivity == 1.0
    assert specificity == 0.0


def test_operating_point_picks_lowest_fpr():
    data = scored([0.9, 0.8, 0.7, 0.6, 0.5], [1, 1, 0, 1, 0])
    threshold, sensitivity, specificity = operating_point(roc(data), 0.9)
    assert sensitivity == 1.0
    assert threshold == 0.6
    np.testing.assert_allclose(specificity, 0.5)


def test_operating_point_target_validation():
    data = scored([0.9, 0.1], [1, 0])
    with pytest.raises(ValidationError):
        operating_point(roc(data), 0.0)
    with pytest.raises(ValidationError):
        operating_point(roc(data), 1.5)


def test_roc_csv_round_trip(tmp_path):
    curve = roc(random_scores(2, ties=True))
    path = tmp_path / "roc.csv"
    save_roc_csv(curve, path)
    loaded = load_roc_csv(path)
    np.testing.assert_array_equal(loaded.thresholds, curve.thresholds)
    np.testing.assert_array_equal(loaded.fpr, curve.fpr)
    np.testing.assert_array_equal(loaded.tpr, curve.tpr)
    assert loaded.auc == curve.auc


def test_roc_csv_header_validated(tmp_path):
    path = tmp_path / "roc.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValidationError):
        load_roc_csv(path)


def test_svg_export_is_deterministic(tmp_path):
    curve = roc(random_scores(3))
    save_roc_svg([("model", curve)], tmp_path / "a.svg")
    save_roc_svg([("model", curve)], tmp_path / "b.svg")
    first = (tmp_path / "a.svg").read_text()
    assert first == (tmp_path / "b.svg").read_text()
    assert "<svg" in first and "polyline" in first and "AUC" in first


def test_summary_file(tmp_path):
    save_summary(tmp_path / "summary.json", {"auc": 0.5})
    assert '"auc"' in (tmp_path / "summary.json").read_text()
