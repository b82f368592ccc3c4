"""4-connected component labelling and per-instance read-out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

MIN_AREA = 3


@dataclass
class Instance:
    label: int
    bbox: tuple[int, int, int, int]  # x1, y1, x2, y2 inclusive
    centroid: tuple[float, float]  # x, y
    area: int


@dataclass
class LocalizationResult:
    image_id: str
    instances: list[Instance] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.instances)

    def centers(self) -> np.ndarray:
        return np.array([i.centroid for i in self.instances], dtype=float).reshape(-1, 2)

    def to_record(self) -> str:
        """One line: ``image_id count`` then ``x1 y1 x2 y2 cx cy`` per instance."""
        parts = [self.image_id, str(self.count)]
        for inst in self.instances:
            parts += [str(v) for v in inst.bbox]
            parts += [f"{inst.centroid[0]:.4f}", f"{inst.centroid[1]:.4f}"]
        return " ".join(parts)

    @classmethod
    def from_record(cls, line: str) -> "LocalizationResult":
        tok = line.split()
        image_id, n = tok[0], int(tok[1])
        if len(tok) != 2 + 6 * n:
            raise ValueError(f"record for {image_id} has {len(tok) - 2} fields, expected {6 * n}")
        out = []
        for k in range(n):
            v = tok[2 + 6 * k: 8 + 6 * k]
            x1, y1, x2, y2 = map(int, v[:4])
            out.append(Instance(k + 1, (x1, y1, x2, y2), (float(v[4]), float(v[5])),
                                (x2 - x1 + 1) * (y2 - y1 + 1)))
        # area is not carried by the text record; the bbox area is an upper bound
        return cls(image_id, out)

    def to_json(self) -> dict:
        return {"id": self.image_id, "count": self.count,
                "instances": [asdict(i) for i in self.instances]}

    @classmethod
    def from_json(cls, d: dict) -> "LocalizationResult":
        return cls(d["id"], [Instance(i["label"], tuple(i["bbox"]), tuple(i["centroid"]), i["area"])
                             for i in d["instances"]])


def _find(parent: list[int], i: int) -> int:
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:  # path compression
        parent[i], i = root, parent[i]
    return root


def label_components(binary) -> tuple[np.ndarray, int]:
    """Two-pass union-find labelling under 4-connectivity.

    Labels are compacted to ``1..K`` in first-encounter raster order; background
    stays 0. Returns ``(labels, K)``.
    """
    b = np.asarray(binary)
    if b.ndim != 2:
        raise ValueError(f"label_components: expected a 2-D map, got shape {b.shape}")
    if not np.isin(b, (0, 1)).all():
        raise ValueError("label_components: input map is not binary (values other than 0/1)")
    fg = b.astype(bool)
    h, w = fg.shape
    labels = np.zeros((h, w), dtype=np.int64)
    parent = [0]
    size = [0]
    rows = fg.tolist()
    lab = [[0] * w for _ in range(h)]
    for y in range(h):
        row, lrow = rows[y], lab[y]
        up = lab[y - 1] if y else None
        for x in range(w):
            if not row[x]:
                continue
            left = lrow[x - 1] if x else 0
            above = up[x] if up is not None else 0
            if left and above:
                lrow[x] = left
                ra, rb = _find(parent, left), _find(parent, above)
                if ra != rb:
                    if size[ra] < size[rb]:
                        ra, rb = rb, ra
                    parent[rb] = ra
                    size[ra] += size[rb]
            elif left or above:
                lrow[x] = left or above
            else:
                parent.append(len(parent))
                size.append(1)
                lrow[x] = len(parent) - 1
    # second pass: resolve roots and compact in raster order of first encounter
    compact = {}
    for y in range(h):
        lrow = lab[y]
        for x in range(w):
            provisional = lrow[x]
            if provisional:
                root = _find(parent, provisional)
                k = compact.get(root)
                if k is None:
                    k = compact[root] = len(compact) + 1
                lrow[x] = k
    labels[:] = lab
    return labels, len(compact)


def extract_instances(labels, image_id: str = "", min_area: int = MIN_AREA) -> LocalizationResult:
    """Tight boxes, mass centroids and areas; drops components under ``min_area``."""
    labels = np.asarray(labels)
    ys, xs = np.nonzero(labels)
    if ys.size == 0:
        return LocalizationResult(image_id, [])
    ids = labels[ys, xs]
    n = int(ids.max())
    area = np.bincount(ids, minlength=n + 1)
    sx = np.bincount(ids, weights=xs, minlength=n + 1)
    sy = np.bincount(ids, weights=ys, minlength=n + 1)
    x1 = np.full(n + 1, np.iinfo(np.int64).max)
    y1 = np.full(n + 1, np.iinfo(np.int64).max)
    x2 = np.full(n + 1, -1)
    y2 = np.full(n + 1, -1)
    np.minimum.at(x1, ids, xs)
    np.minimum.at(y1, ids, ys)
    np.maximum.at(x2, ids, xs)
    np.maximum.at(y2, ids, ys)
    out = []
    for k in range(1, n + 1):
        if area[k] == 0 or area[k] < min_area:
            continue
        out.append(Instance(len(out) + 1, (int(x1[k]), int(y1[k]), int(x2[k]), int(y2[k])),
                            (float(sx[k] / area[k]), float(sy[k] / area[k])), int(area[k])))
    return LocalizationResult(image_id, out)


def localize_binary(binary, image_id: str = "", min_area: int = MIN_AREA) -> LocalizationResult:
    labels, _ = label_components(binary)
    return extract_instances(labels, image_id, min_area)


def write_records(results, path) -> None:
    with open(path, "w") as f:
        for r in results:
            f.write(r.to_record() + "\n")


def write_json(results, path) -> None:
    with open(path, "w") as f:
        json.dump([r.to_json() for r in results], f, indent=1)


def read_records(path) -> list[LocalizationResult]:
    with open(path) as f:
        return [LocalizationResult.from_record(line) for line in f if line.strip()]
