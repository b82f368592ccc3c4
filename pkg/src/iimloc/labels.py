"""Independent instance map (IIM) ground truth from box or point annotations.

Every instance is painted as its own region and neighbouring regions are kept
apart, so binarizing the map and re-labelling 4-connected components gives
back exactly one component per annotated head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SHRINK = 0.95
MAX_RADIUS = 15  # 31-pixel diameter


@dataclass
class Annotation:
    """Per-image ground truth. Boxes are inclusive pixel boxes ``(x1, y1, x2, y2)``."""

    image_id: str
    points: list[tuple[float, float]] = field(default_factory=list)
    boxes: list[tuple[float, float, float, float]] | None = None

    def __post_init__(self):
        self.points = [tuple(map(float, p)) for p in self.points]
        if self.boxes is not None:
            self.boxes = [tuple(map(float, b)) for b in self.boxes]
            for b in self.boxes:
                if not (b[0] < b[2] and b[1] < b[3]):
                    raise ValueError(f"{self.image_id}: invalid box {b}")

    @property
    def count(self) -> int:
        return len(self.boxes) if self.boxes else len(self.points)

    def sigmas(self) -> np.ndarray:
        """Match radius per instance, ``sqrt(w^2 + h^2) / 2`` of its box."""
        if not self.boxes:
            raise ValueError(f"{self.image_id}: match radii need box annotations")
        b = np.asarray(self.boxes, dtype=float)
        return np.hypot(b[:, 2] - b[:, 0], b[:, 3] - b[:, 1]) / 2.0

    def centers(self) -> np.ndarray:
        """Instance centers: box centers when boxes exist, otherwise the points."""
        if self.boxes:
            b = np.asarray(self.boxes, dtype=float)
            return np.stack([(b[:, 0] + b[:, 2]) / 2, (b[:, 1] + b[:, 3]) / 2], axis=1)
        return np.asarray(self.points, dtype=float).reshape(-1, 2)

    def to_json(self) -> dict:
        d = {"id": self.image_id, "points": [list(p) for p in self.points]}
        if self.boxes is not None:
            d["boxes"] = [list(b) for b in self.boxes]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Annotation":
        return cls(str(d["id"]), [tuple(p) for p in d.get("points", [])],
                   [tuple(b) for b in d["boxes"]] if d.get("boxes") is not None else None)


def _round(v):
    # round half up, monotone, so rounded box edges bracket the rounded center
    return np.floor(np.asarray(v, dtype=float) + 0.5).astype(np.int64)


def _raster(cx, cy, w, h):
    return _round(cx - w / 2), _round(cy - h / 2), _round(cx + w / 2), _round(cy + h / 2)


def _violations(x1, y1, x2, y2, w, h):
    """Boolean matrix of pairs closer than a quarter of the smaller box side."""
    # background pixels between two rectangles along their best-separated axis
    gap_x = np.maximum(x1[None, :] - x2[:, None], x1[:, None] - x2[None, :])
    gap_y = np.maximum(y1[None, :] - y2[:, None], y1[:, None] - y2[None, :])
    gap = np.maximum(gap_x, gap_y) - 1
    area = (w + 1) * (h + 1)
    side = np.minimum(w, h)
    smaller = np.where(area[:, None] <= area[None, :], side[:, None], side[None, :])
    bad = gap <= smaller / 4.0
    np.fill_diagonal(bad, False)
    return bad


def shrink_boxes(boxes) -> np.ndarray:
    """Shrink overlapping boxes about their centers until they are separated.

    Each round multiplies width and height of every box in a violating pair by
    0.95. A box stops at a single pixel. Returns inclusive integer boxes.
    """
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    cx, cy = (b[:, 0] + b[:, 2]) / 2, (b[:, 1] + b[:, 3]) / 2
    w, h = b[:, 2] - b[:, 0], b[:, 3] - b[:, 1]
    n = len(b)
    if n == 0:
        return np.zeros((0, 4), dtype=np.int64)
    rc = np.stack([_round(cx), _round(cy)], axis=1)
    if len(np.unique(rc, axis=0)) < n:
        raise ValueError("two boxes share the same center pixel and cannot be separated")
    while True:
        x1, y1, x2, y2 = _raster(cx, cy, w, h)
        bad = _violations(x1, y1, x2, y2, w, h)
        involved = bad.any(axis=1)
        floor = (x1 == x2) & (y1 == y2)
        active = involved & ~floor
        if not active.any():
            break
        w = np.where(active, w * SHRINK, w)
        h = np.where(active, h * SHRINK, h)
        # once the raster collapses to one pixel, pin the size there
        x1, y1, x2, y2 = _raster(cx, cy, w, h)
        one = (x1 == x2) & (y1 == y2)
        w = np.where(one, 0.0, w)
        h = np.where(one, 0.0, h)
    x1, y1, x2, y2 = _raster(cx, cy, w, h)
    # pixel sets that still touch under 4-connectivity would merge
    gap_x = np.maximum(x1[None, :] - x2[:, None], x1[:, None] - x2[None, :])
    gap_y = np.maximum(y1[None, :] - y2[:, None], y1[:, None] - y2[None, :])
    touching = (np.maximum(gap_x, gap_y) <= 1) & ~((gap_x == 1) & (gap_y == 1))
    np.fill_diagonal(touching, False)
    if touching.any():
        i, j = np.argwhere(touching)[0]
        raise ValueError(f"boxes {i} and {j} are too close to be separated at single-pixel size")
    return np.stack([x1, y1, x2, y2], axis=1)


def iim_from_boxes(ann: Annotation, height: int, width: int) -> tuple[np.ndarray, int]:
    """Paint shrunk boxes as filled rectangles labelled 1..N. Returns ``(map, N)``."""
    if ann.boxes is None:
        raise ValueError(f"{ann.image_id}: no box annotations")
    out = np.zeros((height, width), dtype=np.int32)
    rects = shrink_boxes(ann.boxes)
    for k, (x1, y1, x2, y2) in enumerate(rects, start=1):
        x1, x2 = max(x1, 0), min(x2, width - 1)
        y1, y2 = max(y1, 0), min(y2, height - 1)
        if x1 <= x2 and y1 <= y2:
            out[y1:y2 + 1, x1:x2 + 1] = k
    return out, len(rects)


def point_radii(points) -> np.ndarray:
    """Disk radius per point: ``min(15, floor((d_nn - 2) / 2))``, at least 0.

    ``d_nn`` is the distance between rounded centers and the nearest other
    point. Two radii along any pair then sum to at most ``d - 2``, which keeps
    the disks from touching.
    """
    c = _round(np.asarray(points, dtype=float).reshape(-1, 2))
    n = len(c)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1:
        return np.array([MAX_RADIUS])
    d = np.hypot(*(c[:, None, :] - c[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    dmin = d.min(axis=1)
    if (dmin == 0).any():
        raise ValueError("coincident points cannot form separate instances")
    if (dmin == 1).any():
        raise ValueError("4-adjacent points cannot form separate instances")
    r = np.floor((dmin - 2.0) / 2.0 + 1e-9)
    return np.clip(r, 0, MAX_RADIUS).astype(np.int64)


def iim_from_points(ann: Annotation, height: int, width: int) -> tuple[np.ndarray, int]:
    """Paint one disk per point, radius limited by the nearest neighbour."""
    out = np.zeros((height, width), dtype=np.int32)
    if not ann.points:
        return out, 0
    c = _round(np.asarray(ann.points, dtype=float))
    radii = point_radii(ann.points)
    for k, ((x, y), r) in enumerate(zip(c, radii), start=1):
        y0, y1 = max(y - r, 0), min(y + r, height - 1)
        x0, x1 = max(x - r, 0), min(x + r, width - 1)
        if y0 > y1 or x0 > x1:
            continue
        yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        disk = (xx - x) ** 2 + (yy - y) ** 2 <= r * r
        out[y0:y1 + 1, x0:x1 + 1][disk] = k
    return out, len(c)


def generate(ann: Annotation, height: int, width: int, source: str = "auto"):
    """Pick box mode when boxes are present (or requested), else point mode."""
    if source == "boxes" or (source == "auto" and ann.boxes):
        return iim_from_boxes(ann, height, width)
    if source in ("points", "auto"):
        return iim_from_points(ann, height, width)
    raise ValueError(f"unknown label source {source!r}")
