import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iimloc.labels import Annotation, iim_from_boxes, iim_from_points, point_radii, shrink_boxes
from oracles import flood_fill_components


def count(labels):
    return flood_fill_components(labels > 0)[1]


def test_single_box():
    lab, n = iim_from_boxes(Annotation("a", [(15, 15)], [(10, 10, 20, 20)]), 32, 32)
    assert n == 1
    assert (lab == 1).sum() == 121
    assert lab[10:21, 10:21].all()


def test_far_boxes_unchanged():
    boxes = [(2, 2, 8, 8), (20, 20, 28, 26)]
    np.testing.assert_array_equal(shrink_boxes(boxes), np.array(boxes))
    lab, n = iim_from_boxes(Annotation("a", [], boxes), 32, 32)
    assert n == 2 and count(lab) == 2


def test_overlapping_boxes_separated():
    boxes = [(0, 0, 20, 20), (10, 0, 30, 20)]  # 20x20, centers 10 px apart
    rects = shrink_boxes(boxes)
    w = rects[:, 2] - rects[:, 0]
    gap = rects[1, 0] - rects[0, 2] - 1
    assert gap > min(w.min(), (rects[:, 3] - rects[:, 1]).min()) / 4
    lab, n = iim_from_boxes(Annotation("a", [], boxes), 40, 40)
    assert n == 2 and count(lab) == 2
    # centered sub-rectangles of the originals
    for r, b in zip(rects, boxes):
        assert b[0] <= r[0] <= r[2] <= b[2] and b[1] <= r[1] <= r[3] <= b[3]


def test_identical_centers_rejected():
    with pytest.raises(ValueError, match="same center"):
        shrink_boxes([(0, 0, 10, 10), (0, 0, 10, 10)])


def test_isolated_point_radius_15():
    lab, n = iim_from_points(Annotation("a", [(40, 40)]), 80, 80)
    assert n == 1
    ys, xs = np.nonzero(lab)
    assert xs.max() - xs.min() + 1 == 31 and ys.max() - ys.min() + 1 == 31


def test_two_points_ten_apart():
    assert list(point_radii([(10, 20), (20, 20)])) == [4, 4]
    lab, n = iim_from_points(Annotation("a", [(10, 20), (20, 20)]), 40, 40)
    assert n == 2 and count(lab) == 2
    row = lab[20]
    assert np.nonzero(row == 1)[0].max() == 14 and np.nonzero(row == 2)[0].min() == 16


def test_odd_spacing_does_not_touch():
    # nine pixels apart: radii 4 + 4 would make the disks 4-adjacent
    lab, n = iim_from_points(Annotation("a", [(10, 10), (19, 10)]), 30, 30)
    assert count(lab) == 2


def test_empty_and_coincident():
    lab, n = iim_from_points(Annotation("a", []), 8, 8)
    assert n == 0 and not lab.any()
    with pytest.raises(ValueError, match="coincident"):
        iim_from_points(Annotation("a", [(3, 3), (3.2, 2.9)]), 8, 8)


def test_deterministic():
    ann = Annotation("a", [(5, 5), (9, 7), (20, 3)], [(1, 1, 9, 9), (5, 3, 13, 11), (15, 0, 25, 6)])
    a, _ = iim_from_boxes(ann, 32, 32)
    b, _ = iim_from_boxes(ann, 32, 32)
    assert np.array_equal(a, b)


@st.composite
def spread_points(draw, size=64, max_n=25):
    n = draw(st.integers(0, max_n))
    pts = []
    for _ in range(n):
        x = draw(st.integers(0, size - 1))
        y = draw(st.integers(0, size - 1))
        if all(max(abs(x - px), abs(y - py)) >= 2 for px, py in pts):
            pts.append((x, y))
    return pts


@settings(max_examples=60, deadline=None)
@given(spread_points())
def test_points_mode_count_and_membership(pts):
    lab, n = iim_from_points(Annotation("a", pts), 64, 64)
    assert n == len(pts) == count(lab)
    for k, (x, y) in enumerate(pts, start=1):
        assert lab[y, x] == k


@st.composite
def box_sets(draw, size=64, max_n=15):
    n = draw(st.integers(0, max_n))
    boxes, centers = [], set()
    for _ in range(n):
        cx = draw(st.integers(2, size - 3))
        cy = draw(st.integers(2, size - 3))
        if any(max(abs(cx - a), abs(cy - b)) < 2 for a, b in centers):
            continue
        hw = draw(st.integers(1, 10))
        hh = draw(st.integers(1, 10))
        centers.add((cx, cy))
        boxes.append((cx - hw, cy - hh, cx + hw, cy + hh))
    return boxes


@settings(max_examples=60, deadline=None)
@given(box_sets())
def test_boxes_mode_count_and_membership(boxes):
    lab, n = iim_from_boxes(Annotation("a", [], boxes), 64, 64)
    assert n == len(boxes) == count(lab)
    for k, (x1, y1, x2, y2) in enumerate(boxes, start=1):
        assert lab[(y1 + y2) // 2, (x1 + x2) // 2] == k


def test_sigmas():
    ann = Annotation("a", [(5, 5)], [(0, 0, 6, 8)])
    assert ann.sigmas()[0] == pytest.approx(5.0)
    np.testing.assert_allclose(ann.centers(), [[3.0, 4.0]])
    with pytest.raises(ValueError):
        Annotation("b", [], [(5, 5, 2, 9)])
