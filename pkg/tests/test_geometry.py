import dataclasses
import math

import numpy as np
import pytest

from intertrack.geometry import (
    SimilarityKernel,
    consistent_iou,
    consistent_iou_matrix,
    expansion_ratio,
    height_iou,
    height_iou_matrix,
    hm_iou,
    hm_iou_matrix,
    iou,
    iou_matrix,
    stack_boxes,
)
from intertrack.model import BoundingBox, TrackerConfig


def box_ltwh(left, top, w, h):
    return BoundingBox.from_ltwh(left, top, w, h)


def random_boxes(rng, n, w_lo=5.0, w_hi=120.0):
    cx = rng.uniform(0, 500, n)
    cy = rng.uniform(0, 500, n)
    w = rng.uniform(w_lo, w_hi, n)
    h = rng.uniform(w_lo, w_hi, n)
    return np.stack([cx, cy, w, h], axis=1)


# --- fixed-value checks -----------------------------------------------------

def test_iou_offset_pair():
    # 80x50 boxes offset by (15, 15): intersection 65x35 = 2275,
    # union 2*4000 - 2275 = 5725.
    a = box_ltwh(0, 0, 80, 50)
    b = box_ltwh(15, 15, 80, 50)
    assert iou(a, b) == pytest.approx(2275 / 5725, abs=1e-12)
    assert iou(a, b) == pytest.approx(0.397, abs=0.005)


def test_iou_offset_pair_small():
    # Same (15, 15) offset on 40x25 boxes collapses to 250/1750.
    a = box_ltwh(0, 0, 40, 25)
    b = box_ltwh(15, 15, 40, 25)
    assert iou(a, b) == pytest.approx(250 / 1750, abs=1e-12)
    assert iou(a, b) == pytest.approx(0.143, abs=0.005)


def test_iou_disjoint_and_identical():
    a = box_ltwh(0, 0, 10, 10)
    assert iou(a, box_ltwh(50, 50, 10, 10)) == 0.0
    assert iou(a, box_ltwh(10, 0, 10, 10)) == 0.0  # touching edges
    assert iou(a, a) == 1.0


def test_height_iou_intervals():
    a = box_ltwh(0, 0, 10, 10)      # vertical extent [0, 10]
    b = box_ltwh(100, 5, 10, 10)    # vertical extent [5, 15]; x-disjoint
    assert height_iou(a, b) == pytest.approx(5 / 15, abs=1e-12)
    assert iou(a, b) == 0.0


def test_hm_iou_is_product():
    a = box_ltwh(0, 0, 80, 50)
    b = box_ltwh(15, 15, 80, 50)
    expected = (2275 / 5725) * (35 / 65)
    assert hm_iou(a, b) == pytest.approx(expected, abs=1e-12)
    assert hm_iou(a, b) == pytest.approx(0.2139738, abs=1e-6)


def test_expansion_ratio_values():
    assert expansion_ratio(32, 32, 64, 0.2) == pytest.approx(math.exp(0.4), abs=1e-9)
    assert expansion_ratio(64, 64, 64, 0.2) == pytest.approx(math.exp(0.2), abs=1e-9)
    # Asymmetric widths use the mean of the per-box exponents.
    assert expansion_ratio(16, 64, 64, 0.2) == pytest.approx(
        math.exp(0.2 * (4 + 1) / 2), abs=1e-12)


def test_zero_scaling_disables_expansion():
    cfg = dataclasses.replace(TrackerConfig(), ci_scaling_factor=0.0)
    a = box_ltwh(0, 0, 40, 25)
    b = box_ltwh(15, 15, 40, 25)
    assert expansion_ratio(40, 40, 64, 0.0) == 1.0
    assert consistent_iou(a, b, cfg) == pytest.approx(iou(a, b), abs=1e-12)


def test_consistent_iou_expands_small_pairs():
    cfg = TrackerConfig()
    a = box_ltwh(0, 0, 40, 25)
    b = box_ltwh(15, 15, 40, 25)
    # Hand-rolled expectation: both widths below 64 so both boxes grow by
    # r = exp(0.2 * 64/40) about their centers (20, 12.5) and (35, 27.5).
    r = math.exp(0.2 * 64 / 40)
    w, h = 40 * r, 25 * r
    ix = min(20 + w / 2, 35 + w / 2) - max(20 - w / 2, 35 - w / 2)
    iy = min(12.5 + h / 2, 27.5 + h / 2) - max(12.5 - h / 2, 27.5 - h / 2)
    expected = (ix * iy) / (2 * w * h - ix * iy)
    got = consistent_iou(a, b, cfg)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got > iou(a, b)


def test_consistent_iou_leaves_wide_pairs_alone():
    cfg = TrackerConfig()
    a = box_ltwh(0, 0, 80, 50)
    b = box_ltwh(15, 15, 80, 50)
    assert consistent_iou(a, b, cfg) == pytest.approx(iou(a, b), abs=1e-12)
    # One small box is not enough; both must be narrow.
    c = box_ltwh(0, 0, 40, 50)
    assert consistent_iou(c, b, cfg) == pytest.approx(iou(c, b), abs=1e-12)


def test_consistent_iou_threshold_is_strict():
    cfg = TrackerConfig()
    a = box_ltwh(0, 0, 64, 30)
    b = box_ltwh(10, 5, 64, 30)
    assert consistent_iou(a, b, cfg) == pytest.approx(iou(a, b), abs=1e-12)


# --- matrix forms vs scalar forms -------------------------------------------

def test_matrix_kernels_match_scalar():
    rng = np.random.RandomState(7)
    a = random_boxes(rng, 23)
    b = random_boxes(rng, 17)
    boxes_a = [BoundingBox(*row) for row in a]
    boxes_b = [BoundingBox(*row) for row in b]

    got = iou_matrix(a, b)
    got_h = height_iou_matrix(a, b)
    got_hm = hm_iou_matrix(a, b)
    for i, ba in enumerate(boxes_a):
        for j, bb in enumerate(boxes_b):
            assert got[i, j] == pytest.approx(iou(ba, bb), abs=1e-10)
            assert got_h[i, j] == pytest.approx(height_iou(ba, bb), abs=1e-10)
            assert got_hm[i, j] == pytest.approx(hm_iou(ba, bb), abs=1e-10)


@pytest.mark.parametrize("use_hm", [False, True])
def test_consistent_matrix_matches_scalar(use_hm):
    cfg = dataclasses.replace(TrackerConfig(), use_hm_iou=use_hm)
    rng = np.random.RandomState(11)
    # Width range straddles the 64px threshold so the mask path is exercised.
    a = random_boxes(rng, 19, w_lo=10, w_hi=110)
    b = random_boxes(rng, 21, w_lo=10, w_hi=110)
    got = consistent_iou_matrix(a, b, cfg)
    for i, ra in enumerate(a):
        for j, rb in enumerate(b):
            want = consistent_iou(BoundingBox(*ra), BoundingBox(*rb), cfg)
            assert got[i, j] == pytest.approx(want, abs=1e-10)


def test_stack_boxes_round_trip():
    boxes = [box_ltwh(0, 0, 10, 20), box_ltwh(5, 5, 30, 40)]
    arr = stack_boxes(boxes)
    assert arr.shape == (2, 4)
    assert arr[0].tolist() == [5, 10, 10, 20]
    assert stack_boxes([]).shape == (0, 4)


# --- property checks --------------------------------------------------------

def test_kernels_symmetric_and_bounded():
    rng = np.random.RandomState(3)
    cfg = TrackerConfig()
    for _ in range(300):
        a = BoundingBox(*random_boxes(rng, 1)[0])
        b = BoundingBox(*random_boxes(rng, 1)[0])
        for fn in (iou, height_iou, hm_iou):
            v = fn(a, b)
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(fn(b, a), abs=1e-12)
        v = consistent_iou(a, b, cfg)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(consistent_iou(b, a, cfg), abs=1e-12)


def test_iou_scale_invariant():
    rng = np.random.RandomState(5)
    for _ in range(200):
        row_a, row_b = random_boxes(rng, 2)
        s = rng.uniform(0.1, 10)
        a, b = BoundingBox(*row_a), BoundingBox(*row_b)
        sa = BoundingBox(*(row_a * s))
        sb = BoundingBox(*(row_b * s))
        assert iou(sa, sb) == pytest.approx(iou(a, b), abs=1e-10)
        assert hm_iou(sa, sb) == pytest.approx(hm_iou(a, b), abs=1e-10)


def test_consistent_never_below_raw():
    # Small sample here; the large-sample version lives in the acceptance
    # suite.  Narrow widths keep every pair inside the expansion regime.
    rng = np.random.RandomState(13)
    cfg = TrackerConfig()
    a = random_boxes(rng, 200, w_lo=5, w_hi=63)
    b = a + rng.uniform(-30, 30, a.shape)
    b[:, 2:] = np.abs(b[:, 2:]) + 1.0
    b[:, 2] = np.clip(b[:, 2], 5, 63)
    raw = iou_matrix(a, b)
    cons = consistent_iou_matrix(a, b, cfg)
    assert (cons >= raw - 1e-9).all()


def test_expansion_keeps_center():
    b = box_ltwh(10, 20, 30, 40)
    e = b.expanded(1.5)
    assert (e.cx, e.cy) == (b.cx, b.cy)
    assert e.w == pytest.approx(45)
    assert e.h == pytest.approx(60)


# --- kernel factory ---------------------------------------------------------

def test_kernel_respects_flags():
    a = box_ltwh(0, 0, 40, 25)
    b = box_ltwh(15, 15, 40, 25)
    base = TrackerConfig()

    plain = SimilarityKernel(dataclasses.replace(base, enable_ci=False))
    assert plain.pair(a, b) == pytest.approx(iou(a, b), abs=1e-12)

    hm = SimilarityKernel(dataclasses.replace(base, enable_ci=False, use_hm_iou=True))
    assert hm.pair(a, b) == pytest.approx(hm_iou(a, b), abs=1e-12)

    ci = SimilarityKernel(base)
    assert ci.pair(a, b) == pytest.approx(consistent_iou(a, b, base), abs=1e-12)

    ci_hm = SimilarityKernel(dataclasses.replace(base, use_hm_iou=True))
    assert ci_hm.pair(a, b) < ci.pair(a, b)


def test_kernel_matrix_empty():
    k = SimilarityKernel(TrackerConfig())
    assert k.matrix(np.zeros((0, 4)), np.zeros((3, 4))).shape == (0, 3)
    assert k.matrix(np.zeros((2, 4)), np.zeros((0, 4))).shape == (2, 0)
