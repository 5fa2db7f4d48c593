import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docseg.metrics import (DetectionMatch, MetricError, box_iou,
                            detection_prf, mask_iou, mean_iou)
from docseg.postproc import AxisAlignedBox

from oracles import best_matching_count


# ---------------------------------------------------------------------------
# Mask IoU

def test_identical_masks():
    m = np.zeros((10, 10), bool)
    m[2:5, 2:5] = True
    assert mask_iou(m, m) == 1.0


def test_disjoint_masks():
    a = np.zeros((10, 10), bool)
    b = np.zeros((10, 10), bool)
    a[0:2, 0:2] = True
    b[5:7, 5:7] = True
    assert mask_iou(a, b) == 0.0


def test_half_overlap_thirds():
    a = np.zeros((4, 4), bool)
    b = np.zeros((4, 4), bool)
    a[:, 0:2] = True   # 8 px
    b[:, 1:3] = True   # 8 px, 4 shared
    assert mask_iou(a, b) == pytest.approx(1 / 3)


def test_two_empty_masks_perfect():
    assert mask_iou(np.zeros((5, 5)), np.zeros((5, 5))) == 1.0


def test_one_empty_mask_zero():
    a = np.zeros((5, 5))
    b = np.ones((5, 5))
    assert mask_iou(a, b) == 0.0


def test_mask_shape_mismatch():
    with pytest.raises(MetricError, match="shape"):
        mask_iou(np.zeros((4, 4)), np.zeros((4, 5)))


def test_mask_iou_symmetric():
    rng = np.random.default_rng(0)
    a = rng.random((16, 16)) > 0.5
    b = rng.random((16, 16)) > 0.5
    assert mask_iou(a, b) == mask_iou(b, a)


# ---------------------------------------------------------------------------
# Box IoU

def test_box_iou_examples():
    a = AxisAlignedBox(0, 0, 10, 10)
    b = AxisAlignedBox(5, 0, 15, 10)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, b) == pytest.approx(50 / 150)
    assert box_iou(a, AxisAlignedBox(20, 20, 30, 30)) == 0.0
    # boxes touching along an edge share zero area
    assert box_iou(a, AxisAlignedBox(10, 0, 20, 10)) == 0.0


def test_box_iou_nested():
    outer = AxisAlignedBox(0, 0, 10, 10)
    inner = AxisAlignedBox(2, 2, 7, 7)
    assert box_iou(outer, inner) == pytest.approx(25 / 100)


@given(st.tuples(*[st.integers(0, 20)] * 8))
@settings(max_examples=60, deadline=None)
def test_box_iou_bounds_and_symmetry(coords):
    x0, y0, w0, h0, x1, y1, w1, h1 = coords
    a = AxisAlignedBox(x0, y0, x0 + w0 + 1, y0 + h0 + 1)
    b = AxisAlignedBox(x1, y1, x1 + w1 + 1, y1 + h1 + 1)
    iou = box_iou(a, b)
    assert 0.0 <= iou <= 1.0
    assert iou == box_iou(b, a)


# ---------------------------------------------------------------------------
# Mean IoU

def test_mean_iou():
    assert mean_iou([1.0, 0.5, 0.0]) == pytest.approx(0.5)
    with pytest.raises(MetricError):
        mean_iou([])


# ---------------------------------------------------------------------------
# Detection precision/recall/F

def test_known_prf_fixture():
    ground_truth = [AxisAlignedBox(0, 0, 10, 10),
                    AxisAlignedBox(20, 0, 30, 10),
                    AxisAlignedBox(40, 0, 50, 10)]
    predictions = [AxisAlignedBox(0, 0, 10, 10),     # exact hit
                   AxisAlignedBox(100, 100, 110, 110)]  # miss
    p, r, f, match = detection_prf(predictions, ground_truth, 0.7)
    assert p == pytest.approx(0.5)
    assert r == pytest.approx(1 / 3)
    assert f == pytest.approx(0.4)
    assert match.pairs == [(0, 0, 1.0)]
    assert match.unmatched_predictions == [1]
    assert sorted(match.unmatched_ground_truths) == [1, 2]


def test_perfect_detection():
    boxes = [AxisAlignedBox(i * 20, 0, i * 20 + 10, 10) for i in range(4)]
    p, r, f, _ = detection_prf(boxes, boxes, 0.9)
    assert (p, r, f) == (1.0, 1.0, 1.0)


def test_no_predictions():
    gt = [AxisAlignedBox(0, 0, 10, 10)]
    p, r, f, match = detection_prf([], gt, 0.5)
    assert (p, r, f) == (0.0, 0.0, 0.0)
    assert match.unmatched_ground_truths == [0]


def test_no_ground_truth():
    pred = [AxisAlignedBox(0, 0, 10, 10)]
    p, r, f, _ = detection_prf(pred, [], 0.5)
    assert (p, r, f) == (0.0, 0.0, 0.0)


def test_one_to_one_not_reused():
    gt = [AxisAlignedBox(0, 0, 10, 10)]
    predictions = [AxisAlignedBox(0, 0, 10, 10), AxisAlignedBox(1, 0, 10, 10)]
    p, r, f, match = detection_prf(predictions, gt, 0.5)
    assert len(match.pairs) == 1
    assert p == 0.5 and r == 1.0


def test_threshold_validation():
    with pytest.raises(MetricError):
        detection_prf([], [], 0.0)
    with pytest.raises(MetricError):
        detection_prf([], [], 1.5)


def _random_boxes(rng, n):
    boxes = []
    for _ in range(n):
        x, y = rng.integers(0, 30, size=2)
        w, h = rng.integers(3, 15, size=2)
        boxes.append(AxisAlignedBox(int(x), int(y), int(x + w), int(y + h)))
    return boxes


@pytest.mark.parametrize("seed", range(40))
def test_greedy_matching_is_optimal_on_small_sets(seed):
    rng = np.random.default_rng(seed)
    predictions = _random_boxes(rng, int(rng.integers(0, 6)))
    ground_truth = _random_boxes(rng, int(rng.integers(0, 6)))
    threshold = float(rng.choice([0.3, 0.5, 0.7]))
    _, _, _, match = detection_prf(predictions, ground_truth, threshold)
    best = best_matching_count(predictions, ground_truth, threshold, box_iou)
    assert len(match.pairs) == best


@pytest.mark.parametrize("seed", range(10))
def test_prf_bounds(seed):
    rng = np.random.default_rng(100 + seed)
    p, r, f, _ = detection_prf(_random_boxes(rng, 5), _random_boxes(rng, 5),
                               0.5)
    assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f <= 1
    if f:
        assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12


def test_mask_iou_fn_pluggable():
    a = np.zeros((8, 8), bool)
    a[0:4, 0:4] = True
    b = np.zeros((8, 8), bool)
    b[0:4, 0:4] = True
    p, r, f, _ = detection_prf([a], [b], 0.9, iou_fn=mask_iou)
    assert (p, r, f) == (1.0, 1.0, 1.0)
