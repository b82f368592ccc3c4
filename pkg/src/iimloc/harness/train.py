"""Joint training of the confidence predictor and the threshold encoder.

Per image the loss is ``MSE(I, G) + weight * L1(O, G)``. MSE always trains the
predictor. L1 reaches the threshold encoder through the negated threshold
gradient and, with routing ``"te+cp"``, the predictor through the
straight-through path. The encoder never sends gradient into the predictor.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .. import binarize as bz
from .. import numgrid as ng
from .model import ModelState, predict_confidence, predictor_backward
from .pipeline import evaluate_dataset

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 12
    batch_size: int = 4
    lr_confidence: float = 1e-3
    lr_threshold: float = 1e-4
    lr_layer: float = 1e-2
    decay: float = 0.99
    l1_weight: float = 1.0
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.l1_weight < 0:
            raise ValueError("l1_weight must be >= 0")
        # reuse the optimizer's own validation of rates and decay
        self.optimizer()

    def optimizer(self) -> ng.OptimizerConfig:
        return ng.OptimizerConfig(self.lr_confidence, self.lr_threshold, self.lr_layer, self.decay)


def loss_and_grads(state: ModelState, image, target, l1_weight: float = 1.0):
    """Forward and backward for one image.

    Returns ``(info, grads)`` where ``info`` holds the loss terms and
    ``grads`` maps parameter names to gradients.
    """
    params = state.params
    conf, feats, cache = predict_confidence(image, params)
    mse, d_conf = ng.mse_loss(conf, target)
    grads: dict[str, np.ndarray] = {}
    if state.mode in ("ibm", "pbm"):
        # encoder inputs are values only; its backward stops at its own params
        out, tape, te_cache = bz.bm_apply(conf, feats, state.mode, params)
    else:
        thr = state.threshold if state.mode == "fixed" else float(params["te.layer.t"])
        out, tape = bz.binarize_forward(conf, thr)
        te_cache = None
    l1, d_out = ng.l1_loss(out, target)
    if l1_weight > 0:
        upstream = l1_weight * d_out
        if te_cache is not None:
            st_conf, te_grads = bz.bm_backward(tape, te_cache, upstream, params)
            grads.update(te_grads)
        else:
            st_conf, grad_t = bz.binarize_backward(tape, upstream)
            if state.mode == "layer":
                grads["te.layer.t"] = np.array(grad_t)
        if state.routing == "te+cp":
            d_conf = d_conf + st_conf
    grads.update(predictor_backward(cache, d_conf, params))
    return {"mse": mse, "l1": l1, "loss": mse + l1_weight * l1}, grads


def _augment(image, target, rng: np.random.Generator):
    if rng.uniform() < 0.5:
        image, target = image[:, ::-1], target[:, ::-1]
    s = rng.uniform(0.8, 1.2)
    h, w = image.shape
    nh, nw = max(16, int(round(h * s))), max(16, int(round(w * s)))
    image = ng.resize_bilinear(image, nh, nw)[0]
    target = (ng.resize_bilinear(target, nh, nw)[0] >= 0.5).astype(float)
    return np.ascontiguousarray(image), np.ascontiguousarray(target)


def apply_update(state: ModelState, grads: dict[str, np.ndarray], config: TrainConfig) -> None:
    opt = config.optimizer()
    scale = opt.decay ** state.epoch
    adam_grads = {k: v for k, v in grads.items() if k != "te.layer.t"}
    lrs = {k: (opt.lr_confidence if k.startswith("cp.") else opt.lr_threshold) * scale
           for k in adam_grads}
    ng.adam_step(state.params, adam_grads, state.adam, lrs, opt.beta1, opt.beta2, opt.eps)
    if "te.layer.t" in grads:
        # bare learnable threshold: plain descent at rate alpha
        g = float(grads["te.layer.t"])
        if not np.isfinite(g):
            raise ValueError("non-finite gradient for parameter 'te.layer.t'")
        state.params["te.layer.t"] = np.array(float(state.params["te.layer.t"]) - opt.lr_layer * scale * g)


def train(state: ModelState, train_data, config: TrainConfig, val_data=None, min_area: int = 3):
    """Train ``state`` in place and return ``(best_state, log)``.

    ``train_data`` is a sequence of ``(image, binary_target)``; ``val_data`` is
    ``(images, annotations)``. The state scoring the best validation F1 is
    returned (the final state when no validation data is given).
    """
    rng = np.random.default_rng(config.seed)
    history = []
    best, best_f1 = None, -1.0
    n = len(train_data)
    step = 0
    for epoch in range(config.epochs):
        state.epoch = epoch
        order = rng.permutation(n)
        sums = {"loss": 0.0, "mse": 0.0, "l1": 0.0}
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            acc: dict[str, np.ndarray] = {}
            for idx in batch:
                image, target = train_data[idx]
                if config.augment:
                    image, target = _augment(image, target, rng)
                info, grads = loss_and_grads(state, image, target, config.l1_weight)
                if not np.isfinite(info["loss"]):
                    raise FloatingPointError(f"non-finite loss at epoch {epoch} step {step}")
                for k in info:
                    sums[k] += info[k]
                for k, g in grads.items():
                    acc[k] = acc[k] + g if k in acc else np.array(g, dtype=float)
            for k in acc:
                acc[k] /= len(batch)
            apply_update(state, acc, config)
            step += 1
        record = {"epoch": epoch, "steps": step, **{k: v / n for k, v in sums.items()}}
        if state.mode == "layer":
            record["threshold"] = float(state.params["te.layer.t"])
        if val_data is not None:
            metrics, _, _ = evaluate_dataset(val_data[0], val_data[1], state, min_area)
            record.update({f"val_{k}": metrics[k] for k in ("F1m", "Pre", "Rec", "MAE")})
            if metrics["F1m"] > best_f1:
                best_f1 = metrics["F1m"]
                best = state.copy()
                best.meta["best_epoch"] = epoch
        log.info("epoch %s %s", epoch, record)
        history.append(record)
    state.epoch = config.epochs
    if best is None:
        best = state.copy()
    best.meta["train_config"] = asdict(config)
    return best, history
