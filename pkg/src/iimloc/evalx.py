"""Instance-level localization metrics and image-level counting errors.

MSE here is the root-mean-square counting error, as in the crowd-counting
literature, not the mean of squares.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class MatchReport:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int, float]] = field(default_factory=list)  # pred, gt, distance

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)


@dataclass
class CountReport:
    abs_errors: list[float]
    mae: float
    mse: float  # root form
    nae: float


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def match_instances(preds, gts, sigmas) -> MatchReport:
    """Optimal one-to-one matching of predicted to GT centers.

    A pair is admissible when their distance is at most the GT's ``sigma``.
    The assignment maximizes the number of matched pairs, then minimizes total
    distance among maximum matchings.
    """
    preds = np.asarray(preds, dtype=float).reshape(-1, 2)
    gts = np.asarray(gts, dtype=float).reshape(-1, 2)
    sigmas = np.asarray(sigmas, dtype=float).reshape(-1)
    if len(sigmas) != len(gts):
        raise ValueError(f"{len(gts)} GT centers but {len(sigmas)} match radii")
    if (sigmas <= 0).any():
        raise ValueError("match radii must be positive")
    n_p, n_g = len(preds), len(gts)
    if n_p == 0 or n_g == 0:
        return MatchReport(0, n_p, n_g)
    dist = np.hypot(preds[:, None, 0] - gts[None, :, 0], preds[:, None, 1] - gts[None, :, 1])
    ok = dist <= sigmas[None, :]
    # every admissible pair is worth more than any sum of distances, so
    # cardinality dominates; inadmissible pairs cost nothing and are dropped
    bonus = dist[ok].sum() + 1.0 if ok.any() else 1.0
    cost = np.where(ok, dist - bonus, 0.0)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c), float(dist[r, c])) for r, c in zip(rows, cols) if ok[r, c]]
    tp = len(pairs)
    return MatchReport(tp, n_p - tp, n_g - tp, pairs)


def localization_scores(reports) -> dict[str, float]:
    """Micro-averaged precision, recall and F1 over a dataset."""
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    pre = _ratio(tp, tp + fp)
    rec = _ratio(tp, tp + fn)
    f1 = _ratio(2 * pre * rec, pre + rec)
    return {"F1m": f1, "Pre": pre, "Rec": rec, "TP": tp, "FP": fp, "FN": fn}


def counting_errors(counts) -> CountReport:
    """MAE, root MSE and NAE over ``(predicted, gt)`` count pairs.

    NAE averages ``|error| / gt`` over images with a positive GT count only.
    """
    c = np.asarray(counts, dtype=float).reshape(-1, 2)
    if (c[:, 1] < 0).any():
        raise ValueError("ground-truth counts must be non-negative")
    if len(c) == 0:
        return CountReport([], 0.0, 0.0, 0.0)
    err = np.abs(c[:, 0] - c[:, 1])
    pos = c[:, 1] > 0
    nae = float(np.mean(err[pos] / c[pos, 1])) if pos.any() else 0.0
    return CountReport(err.tolist(), float(err.mean()), float(np.sqrt(np.mean(err ** 2))), nae)


def metrics_report(reports, counts) -> dict[str, float]:
    loc = localization_scores(reports)
    cnt = counting_errors(counts)
    return {**loc, "MAE": cnt.mae, "MSE": cnt.mse, "NAE": cnt.nae, "images": len(counts)}


def format_report(m: dict) -> str:
    head = f"{'F1m':>7} {'Pre':>7} {'Rec':>7} {'MAE':>8} {'MSE':>8} {'NAE':>7}"
    row = (f"{100 * m['F1m']:7.2f} {100 * m['Pre']:7.2f} {100 * m['Rec']:7.2f} "
           f"{m['MAE']:8.3f} {m['MSE']:8.3f} {m['NAE']:7.3f}")
    return head + "\n" + row


def write_report(m: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(m, f, indent=2, sort_keys=True)
