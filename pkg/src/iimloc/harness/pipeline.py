"""Inference, dataset evaluation and overlay rendering."""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw

from .. import evalx
from ..instances import MIN_AREA, LocalizationResult, localize_binary
from ..labels import Annotation
from .model import ModelState

GREEN = (0, 200, 0)
RED = (230, 0, 0)
MAGENTA = (230, 0, 230)


def localize_image(image, model: ModelState, image_id: str = "",
                   min_area: int = MIN_AREA) -> LocalizationResult:
    """Confidence, threshold, binarize, then read out 4-connected components."""
    _, _, binary = model.forward(image)
    return localize_binary(binary, image_id, min_area)


def match_one(result: LocalizationResult, ann: Annotation) -> evalx.MatchReport:
    if ann.count == 0:
        return evalx.MatchReport(0, result.count, 0)
    return evalx.match_instances(result.centers(), ann.centers(), ann.sigmas())


def score_results(results, annotations) -> tuple[dict, list[evalx.MatchReport]]:
    """Metrics for paired lists of results and annotations."""
    if len(results) != len(annotations):
        raise ValueError(f"{len(results)} results but {len(annotations)} annotations")
    reports = [match_one(r, a) for r, a in zip(results, annotations)]
    counts = [(r.count, a.count) for r, a in zip(results, annotations)]
    return evalx.metrics_report(reports, counts), reports


def evaluate_dataset(images, annotations, model: ModelState, min_area: int = MIN_AREA):
    """Localize every image and score against its annotation.

    Returns ``(metrics, results, reports)``.
    """
    results = [localize_image(img, model, a.image_id, min_area)
               for img, a in zip(images, annotations)]
    metrics, reports = score_results(results, annotations)
    return metrics, results, reports


def render_overlay(image, result: LocalizationResult, ann: Annotation, path=None,
                   scale: int = 4) -> dict[str, int]:
    """Draw TP (green), FN (red) and FP (magenta) markers plus GT match circles.

    Returns the marker counts; writes a PNG when ``path`` is given.
    """
    report = match_one(result, ann)
    base = np.clip(np.asarray(image, dtype=float) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    canvas = Image.fromarray(base, mode="L").convert("RGB")
    canvas = canvas.resize((canvas.width * scale, canvas.height * scale), Image.NEAREST)
    draw = ImageDraw.Draw(canvas)
    matched_gt = {g for _, g, _ in report.pairs}
    matched_pred = {p for p, _, _ in report.pairs}
    gts = ann.centers()
    sigmas = ann.sigmas() if ann.count else np.zeros(0)
    preds = result.centers()

    def s(v):
        return (v + 0.5) * scale

    def dot(x, y, color):
        r = max(2, scale // 2 + 1)
        draw.ellipse([s(x) - r, s(y) - r, s(x) + r, s(y) + r], fill=color)

    counts = {"tp": 0, "fn": 0, "fp": 0}
    for g, ((x, y), sig) in enumerate(zip(gts, sigmas)):
        color = GREEN if g in matched_gt else RED
        draw.ellipse([s(x) - sig * scale, s(y) - sig * scale, s(x) + sig * scale,
                      s(y) + sig * scale], outline=color)
        if g not in matched_gt:
            dot(x, y, RED)
            counts["fn"] += 1
    for p, (x, y) in enumerate(preds):
        if p in matched_pred:
            dot(x, y, GREEN)
            counts["tp"] += 1
        else:
            dot(x, y, MAGENTA)
            counts["fp"] += 1
    if path is not None:
        canvas.save(path)
    return counts
