"""Threshold ablation on synthetic scenes: fixed vs. learned binarization.

One run per seed trains four models on the same in-memory dataset:

* ``fixed``: predictor only (MSE), read out at T = 0.5 and at T = 0.8,
* ``ibm``:   image-level threshold encoder, L1 routed to encoder and predictor,
* ``pbm``:   pixel-level threshold encoder, same routing,
* ``pbm_te``: pixel-level encoder, L1 routed to the encoder only.

With a fixed threshold the L1 term reaches no parameter, so both fixed read-outs
share one trained predictor; only checkpoint selection differs (see
``fixed_select``).
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..labels import generate
from .io import scene_rng
from .model import ModelState
from .pipeline import evaluate_dataset
from .scenes import SceneSpec, synth_scene
from .train import TrainConfig, train

log = logging.getLogger(__name__)

RUNS = (("ibm", "ibm", "te+cp"), ("pbm", "pbm", "te+cp"), ("pbm_te", "pbm", "te"))


@dataclass
class AblationConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    n_train: int = 200
    n_val: int = 50
    n_test: int = 50
    n_negative: int = 20
    channels: int = 8
    fixed_select: float = 0.5  # threshold used to pick the fixed model's best epoch
    scenes: SceneSpec = field(default_factory=SceneSpec)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12))


def make_data(config: AblationConfig, seed: int):
    spec = config.scenes

    def split(name, n, s=spec):
        return [synth_scene(s, scene_rng(seed, name, i), f"{name}_{i:04d}") for i in range(n)]

    train_sc = split("train", config.n_train)
    val_sc = split("val", config.n_val)
    test_sc = split("test", config.n_test)
    neg_spec = SceneSpec(**{**asdict(spec), "negative_fraction": 1.0})
    neg_sc = split("negative", config.n_negative, neg_spec)
    as_eval = lambda sc: ([s.image for s in sc], [s.annotation for s in sc])  # noqa: E731
    return {"train": [(s.image, (s.gt > 0).astype(float)) for s in train_sc],
            "val": as_eval(val_sc), "test": as_eval(test_sc), "negative": as_eval(neg_sc)}


def threshold_contrast(model: ModelState, images, annotations) -> dict:
    """Mean threshold on GT foreground vs. background, per image."""
    below, fg_means, bg_means = 0, [], []
    n = 0
    for img, ann in zip(images, annotations):
        if ann.count == 0:
            continue
        gt, _ = generate(ann, *img.shape)
        _, thr, _ = model.forward(img)
        thr = np.broadcast_to(thr, img.shape)
        fg, bg = float(thr[gt > 0].mean()), float(thr[gt == 0].mean())
        fg_means.append(fg)
        bg_means.append(bg)
        below += fg < bg
        n += 1
    return {"fraction": below / n if n else 0.0, "fg": float(np.mean(fg_means)),
            "bg": float(np.mean(bg_means)), "images": n}


def _scores(metrics: dict) -> dict:
    return {k: metrics[k] for k in ("F1m", "Pre", "Rec", "MAE", "MSE", "NAE")}


def run_seed(config: AblationConfig, seed: int) -> dict:
    data = make_data(config, seed)
    tcfg = TrainConfig(**{**asdict(config.train), "seed": seed})
    out: dict = {"seed": seed}

    t0 = time.perf_counter()
    fixed = ModelState.create("fixed", config.fixed_select, "te", config.channels, seed)
    fixed, hist = train(fixed, data["train"], tcfg, data["val"])
    for name, thr in (("fixed_0.5", 0.5), ("fixed_0.8", 0.8)):
        model = fixed.with_threshold(thr)
        m, _, _ = evaluate_dataset(*data["test"], model)
        neg, _, _ = evaluate_dataset(*data["negative"], model)
        out[name] = {**_scores(m), "neg_MAE": neg["MAE"], "best_epoch": fixed.meta["best_epoch"]}
    out["fixed_0.5"]["seconds"] = time.perf_counter() - t0

    for name, mode, routing in RUNS:
        t0 = time.perf_counter()
        state = ModelState.create(mode, 0.5, routing, config.channels, seed)
        best, hist = train(state, data["train"], tcfg, data["val"])
        m, _, _ = evaluate_dataset(*data["test"], best)
        neg, _, _ = evaluate_dataset(*data["negative"], best)
        out[name] = {**_scores(m), "neg_MAE": neg["MAE"], "best_epoch": best.meta["best_epoch"],
                     "seconds": time.perf_counter() - t0,
                     "val_F1m": [h["val_F1m"] for h in hist]}
        if mode == "pbm":
            out[name]["threshold_contrast"] = threshold_contrast(best, *data["test"])
        log.info("seed %d %s F1m %.4f", seed, name, m["F1m"])
    return out


def summarize(per_seed: list[dict]) -> dict:
    names = ["fixed_0.5", "fixed_0.8"] + [r[0] for r in RUNS]
    mean = {n: {k: float(np.mean([s[n][k] for s in per_seed]))
                for k in ("F1m", "Pre", "Rec", "MAE", "neg_MAE")} for n in names}
    pts = lambda a, b: 100.0 * (mean[a]["F1m"] - mean[b]["F1m"])  # noqa: E731
    return {
        "mean": mean,
        "recall_drop_0.8": 100.0 * (mean["fixed_0.5"]["Rec"] - mean["fixed_0.8"]["Rec"]),
        "margin_pbm_vs_fixed": pts("pbm", "fixed_0.5"),
        "margin_ibm_vs_fixed": pts("ibm", "fixed_0.5"),
        "margin_routing": pts("pbm", "pbm_te"),
        "fg_below_bg": float(np.mean([s["pbm"]["threshold_contrast"]["fraction"] for s in per_seed])),
        "neg_MAE_pbm": mean["pbm"]["neg_MAE"],
        "neg_MAE_fixed": mean["fixed_0.5"]["neg_MAE"],
    }


def run_ablation(config: AblationConfig | None = None) -> dict:
    config = config or AblationConfig()
    t0 = time.perf_counter()
    per_seed = [run_seed(config, s) for s in config.seeds]
    return {"config": asdict(config), "seeds": per_seed, "summary": summarize(per_seed),
            "seconds": time.perf_counter() - t0}
