"""Synthetic crowd scenes: soft bright heads on a noisy, unevenly lit background.

Heads are rounded squares (superellipses) that gather around a few cluster
centres and shrink towards the top of the frame, so one image mixes dense and
sparse regions and a wide range of head sizes. Elongated clutter blobs act as
head-like distractors. With ``crowding`` > 0 a per-image density ties the
scene together: dense images hold many small, faint heads and little clutter,
sparse images a few large, bright heads among more clutter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..labels import Annotation, iim_from_boxes


@dataclass
class SceneSpec:
    size: int = 128
    heads: tuple[int, int] = (5, 50)
    radius: tuple[float, float] = (2.0, 9.0)
    noise: float = 0.03
    clutter: float = 3.0  # expected clutter blobs per image
    contrast: tuple[float, float] = (0.1, 0.6)  # head brightness above local background
    clusters: tuple[int, int] = (1, 3)
    background: tuple[float, float] = (0.05, 0.3)
    illumination: float = 0.05
    peak: tuple[float, float] = (0.7, 1.0)  # head brightness spread within an image
    negative_fraction: float = 0.0
    roundness: float = 4.0  # superellipse exponent of a head; 2 gives a disk
    # 0: count, size, contrast and clutter drawn independently. 1: one per-image
    # crowd density drives them all; dense scenes get many small faint heads,
    # sparse ones few large heads and more clutter.
    crowding: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.radius[0] <= self.radius[1]:
            raise ValueError(f"radius range must be positive and ordered, got {self.radius}")
        if not 0 <= self.heads[0] <= self.heads[1]:
            raise ValueError(f"head count range must be non-negative and ordered, got {self.heads}")
        if not 0 <= self.crowding <= 1:
            raise ValueError("crowding must lie in [0, 1]")
        if self.roundness < 1:
            raise ValueError("roundness exponent must be >= 1")
        if self.size < 8:
            raise ValueError("scene size must be at least 8 pixels")


@dataclass
class Scene:
    image: np.ndarray  # (H, W) in [0, 1], quantized to 1/255
    annotation: Annotation
    gt: np.ndarray  # instance label map
    count: int


PLACEMENT_TRIES = 400


def _place_heads(spec: SceneSpec, n: int, rng: np.random.Generator, r_hi: float | None = None):
    s = spec.size
    r_lo = spec.radius[0]
    r_hi = spec.radius[1] if r_hi is None else r_hi
    centres = rng.uniform(0.15 * s, 0.85 * s, size=(rng.integers(spec.clusters[0], spec.clusters[1] + 1), 2))
    spread = rng.uniform(0.08, 0.2) * s
    heads: list[tuple[float, float, float]] = []
    for _ in range(n):
        for attempt in range(PLACEMENT_TRIES):
            if attempt < PLACEMENT_TRIES // 2:
                cx, cy = centres[rng.integers(len(centres))] + rng.normal(0.0, spread, size=2)
            else:  # cluster is full: spill anywhere in the frame
                cx, cy = rng.uniform(0, s - 1, size=2)
            # perspective: heads grow towards the bottom of the frame
            depth = np.clip(cy / s, 0.0, 1.0)
            r = float(np.clip(r_lo + (r_hi - r_lo) * depth * rng.uniform(0.7, 1.3), r_lo, r_hi))
            if not (r <= cx <= s - 1 - r and r <= cy <= s - 1 - r):
                continue
            if all(max(abs(cx - hx), abs(cy - hy)) >= r + hr + 1.5 for hx, hy, hr in heads):
                heads.append((float(cx), float(cy), r))
                break
        else:
            raise ValueError(
                f"could not place head {len(heads) + 1} of {n} after {PLACEMENT_TRIES} tries; "
                f"scene spec is overcrowded")
    return heads


def _render(spec: SceneSpec, heads, rng: np.random.Generator, contrast: float,
            clutter: float) -> np.ndarray:
    s = spec.size
    yy, xx = np.mgrid[0:s, 0:s].astype(float)
    gx, gy = rng.normal(0.0, spec.illumination, size=2)
    img = rng.uniform(*spec.background) + gx * (xx / s - 0.5) + gy * (yy / s - 0.5)
    base = img.copy()
    for cx, cy, r in heads:
        p = spec.roundness
        d = (np.abs(xx - cx) ** p + np.abs(yy - cy) ** p) ** (1.0 / p)
        edge = np.clip((r - d) / 1.5 + 0.5, 0.0, 1.0)
        peak = contrast * rng.uniform(*spec.peak)
        local = base[int(round(cy)), int(round(cx))]
        body = local + peak * (1.0 - 0.25 * np.clip(d / r, 0.0, 1.0) ** 2)
        img = np.maximum(img, edge * body + (1.0 - edge) * img)
    for _ in range(rng.poisson(clutter)):
        cx, cy = rng.uniform(0, s, size=2)
        a, b = rng.uniform(6.0, 18.0), rng.uniform(1.2, 2.5)
        ang = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
        v = -(xx - cx) * np.sin(ang) + (yy - cy) * np.cos(ang)
        q = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        blob = np.clip((1.0 - q) * 3.0, 0.0, 1.0)
        img = img + blob * contrast * rng.uniform(0.5, 0.9)
    img = img + rng.normal(0.0, spec.noise, size=img.shape)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def synth_scene(spec: SceneSpec, rng: np.random.Generator, image_id: str = "scene") -> Scene:
    """Render one scene with exact point and box annotations and its IIM."""
    k = spec.crowding
    negative = rng.uniform() < spec.negative_fraction
    density = 0.0 if negative else rng.uniform()
    mix = lambda: k * density + (1.0 - k) * rng.uniform()  # noqa: E731
    lo, hi = spec.heads
    n = 0 if negative else int(round(lo + (hi - lo) * mix()))
    r_lo, r_hi = spec.radius
    r_hi = r_hi - k * density * 0.6 * (r_hi - r_lo)
    c_lo, c_hi = spec.contrast
    contrast = c_hi - (c_hi - c_lo) * mix()
    clutter = spec.clutter * (1.0 + k * (1.0 - 2.0 * density))
    heads = _place_heads(spec, n, rng, r_hi)
    image = _render(spec, heads, rng, contrast, clutter)
    ann = Annotation(image_id, [(cx, cy) for cx, cy, _ in heads],
                     [(cx - r, cy - r, cx + r, cy + r) for cx, cy, r in heads])
    gt, count = iim_from_boxes(ann, spec.size, spec.size)
    return Scene(image, ann, gt, count)
