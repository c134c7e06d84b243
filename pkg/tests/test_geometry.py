import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualview.errors import DimensionError, ValidationError
from dualview.geometry import dice, label_candidate, rasterize_polygon


def square(x0, y0, side):
    return [(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)]


def test_axis_aligned_square_covers_its_area():
    mask = rasterize_polygon(square(0, 0, 4), (8, 8))
    assert mask.sum() == 16
    assert mask[:4, :4].all()
    assert not mask[4:, :].any()
    assert not mask[:, 4:].any()


def test_rasterize_rejects_degenerate_polygon():
    with pytest.raises(ValidationError):
        rasterize_polygon([(0, 0), (1, 1)], (4, 4))


def test_self_intersecting_polygon_uses_even_odd():
    # bowtie: even-odd fills the two lobes, not the convex hull
    mask = rasterize_polygon([(0, 0), (8, 8), (8, 0), (0, 8)], (8, 8))
    assert 0 < mask.sum() < 64
    assert not mask[4, 3]  # the pinch point stays empty


def test_dice_identical_masks():
    mask = rasterize_polygon(square(1, 1, 3), (8, 8))
    assert dice(mask, mask) == 1.0


def test_dice_disjoint_masks():
    a = rasterize_polygon(square(0, 0, 3), (10, 10))
    b = rasterize_polygon(square(6, 6, 3), (10, 10))
    assert dice(a, b) == 0.0


def test_dice_half_overlap_hand_case():
    a = np.zeros((4, 4), dtype=bool)
    b = np.zeros((4, 4), dtype=bool)
    a[0, :4] = True  # |A| = 4
    b[0, 2:] = True
    b[1, :2] = True  # |B| = 4, overlap 2
    assert dice(a, b) == 0.5


def test_dice_both_empty_is_zero():
    empty = np.zeros((5, 5), dtype=bool)
    assert dice(empty, empty) == 0.0


def test_dice_shape_mismatch():
    with pytest.raises(DimensionError):
        dice(np.zeros((4, 4), dtype=bool), np.zeros((5, 5), dtype=bool))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_dice_is_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((6, 6)) > 0.5
    b = rng.random((6, 6)) > 0.5
    d = dice(a, b)
    assert d == dice(b, a)
    assert 0.0 <= d <= 1.0


# -- candidate labeling -------------------------------------------------------------


def test_candidate_equal_to_ground_truth_is_true_lesion():
    poly = square(2, 2, 5)
    assert label_candidate(poly, [poly], (12, 12)) is True


def test_candidate_disjoint_from_all_ground_truth_is_false():
    assert label_candidate(square(0, 0, 3), [square(8, 8, 3)], (16, 16)) is False


def test_dice_exactly_at_threshold_is_a_false_detection():
    # two 1x10 strips overlapping in exactly one pixel: dice = 2/20 = 0.1
    a = [(0, 0), (1, 0), (1, 10), (0, 10)]
    b = [(0, 9), (1, 9), (1, 19), (0, 19)]
    mask_a = rasterize_polygon(a, (20, 2))
    mask_b = rasterize_polygon(b, (20, 2))
    assert dice(mask_a, mask_b) == 0.1
    assert label_candidate(a, [b], (20, 2), delta=0.1) is False


def test_delta_zero_accepts_any_overlap():
    a = square(0, 0, 4)
    b = square(3, 3, 4)
    assert label_candidate(a, [b], (10, 10), delta=0.0) is True


def test_delta_one_rejects_even_identical_masks():
    poly = square(1, 1, 4)
    assert label_candidate(poly, [poly], (8, 8), delta=1.0) is False


def test_no_ground_truth_means_false_detection():
    assert label_candidate(square(0, 0, 4), [], (8, 8)) is False


def test_best_ground_truth_wins():
    candidate = square(0, 0, 4)
    far = square(20, 20, 4)
    near = square(1, 1, 4)
    assert label_candidate(candidate, [far, near], (30, 30)) is True
