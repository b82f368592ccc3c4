"""Confidence predictor, model state and the checkpoint container."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .. import binarize as bz
from .. import numgrid as ng

MODES = ("fixed", "layer", "ibm", "pbm")
ROUTINGS = ("te", "te+cp")
CHECKPOINT_VERSION = 1
CP_LAYERS = 4


def init_predictor(rng: np.random.Generator, channels: int = 8) -> dict[str, np.ndarray]:
    params = {}
    c_in = 1
    for i in range(CP_LAYERS):
        c_out = 1 if i == CP_LAYERS - 1 else channels
        w, b = ng.init_conv(rng, c_in, c_out, 3)
        params[f"cp.conv{i}.w"] = w
        params[f"cp.conv{i}.b"] = b
        if i < CP_LAYERS - 1:
            params[f"cp.prelu{i}"] = np.array(0.25)
        c_in = c_out
    params[f"cp.conv{CP_LAYERS - 1}.w"] *= 0.1
    params[f"cp.conv{CP_LAYERS - 1}.b"][:] = -2.0  # start near background
    return params


def predict_confidence(image, params: dict[str, np.ndarray]):
    """Run the predictor. Returns ``(confidence, features, cache)``.

    ``features`` are the penultimate activations; ``confidence`` is the
    sigmoid output in [0, 1].
    """
    a = ng.as_stack(image)
    acts, pre = [a], []
    for i in range(CP_LAYERS - 1):
        z = ng.conv2d(a, params[f"cp.conv{i}.w"], params[f"cp.conv{i}.b"], padding=1)
        pre.append(z)
        a = ng.prelu(z, float(params[f"cp.prelu{i}"]))
        acts.append(a)
    last = CP_LAYERS - 1
    logits = ng.conv2d(a, params[f"cp.conv{last}.w"], params[f"cp.conv{last}.b"], padding=1)
    conf = ng.sigmoid(logits)[0]
    return conf, a, (acts, pre, conf)


def predictor_backward(cache, grad_conf, params) -> dict[str, np.ndarray]:
    acts, pre, conf = cache
    grads = {}
    last = CP_LAYERS - 1
    dz = ng.sigmoid_backward(conf, grad_conf)[None]
    da, grads[f"cp.conv{last}.w"], grads[f"cp.conv{last}.b"] = ng.conv2d_backward(
        acts[last], params[f"cp.conv{last}.w"], dz, padding=1)
    for i in reversed(range(last)):
        dz, ds = ng.prelu_backward(pre[i], float(params[f"cp.prelu{i}"]), da)
        grads[f"cp.prelu{i}"] = np.array(ds)
        da, grads[f"cp.conv{i}.w"], grads[f"cp.conv{i}.b"] = ng.conv2d_backward(
            acts[i], params[f"cp.conv{i}.w"], dz, padding=1, need_input_grad=i > 0)
    return grads


@dataclass
class ModelState:
    params: dict[str, np.ndarray]
    mode: str = "fixed"
    threshold: float = 0.5  # used by mode "fixed"; initial value for mode "layer"
    routing: str = "te+cp"
    channels: int = 8
    epoch: int = 0
    adam: ng.AdamState = field(default_factory=ng.AdamState)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.routing not in ROUTINGS:
            raise ValueError(f"unknown routing {self.routing!r}; expected one of {ROUTINGS}")

    @classmethod
    def create(cls, mode: str = "fixed", threshold: float = 0.5, routing: str = "te+cp",
               channels: int = 8, seed: int = 0) -> "ModelState":
        rng = np.random.default_rng(seed)
        params = init_predictor(rng, channels)
        if mode == "ibm":
            params.update(bz.init_ibm(rng, channels))
        elif mode == "pbm":
            params.update(bz.init_pbm(rng, channels))
        elif mode == "layer":
            params["te.layer.t"] = np.array(float(threshold))
        return cls(params, mode, float(threshold), routing, channels)

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def with_threshold(self, threshold: float) -> "ModelState":
        """Same predictor, read out with a different fixed threshold."""
        out = ModelState({k: v.copy() for k, v in self.params.items() if k.startswith("cp.")},
                         "fixed", float(threshold), self.routing, self.channels, self.epoch)
        out.meta = dict(self.meta)
        return out

    def thresholds(self, conf, feats):
        """The threshold field this model applies to a confidence map."""
        if self.mode == "fixed":
            return self.threshold, None
        if self.mode == "layer":
            return float(self.params["te.layer.t"]), None
        if self.mode == "ibm":
            return bz.ibm_threshold(feats, conf, self.params)
        return bz.pbm_threshold(feats, conf, self.params)

    def forward(self, image):
        """Full inference: ``(confidence, threshold, binary map)``."""
        conf, feats, _ = predict_confidence(image, self.params)
        thr, _ = self.thresholds(conf, feats)
        out, _ = bz.binarize_forward(conf, thr)
        return conf, thr, out

    # --- checkpoint container -------------------------------------------------

    def save(self, path) -> None:
        header = {"version": CHECKPOINT_VERSION, "mode": self.mode, "threshold": self.threshold,
                  "routing": self.routing, "channels": self.channels, "epoch": self.epoch,
                  "adam_step": self.adam.step, "meta": self.meta}
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"adam_m/{k}": v for k, v in self.adam.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in self.adam.v.items()})
        arrays["header"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
        with open(path, "wb") as f:
            np.savez(f, **arrays)

    @classmethod
    def load(cls, path) -> "ModelState":
        with np.load(path) as z:
            if "header" not in z.files:
                raise ValueError(f"{path}: not a model checkpoint (no header)")
            header = json.loads(z["header"].tobytes().decode())
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
            groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
            for key in z.files:
                if "/" in key:
                    group, name = key.split("/", 1)
                    groups[group][name] = z[key].copy()
        adam = ng.AdamState(groups["adam_m"], groups["adam_v"], header["adam_step"])
        return cls(groups["param"], header["mode"], header["threshold"], header["routing"],
                   header["channels"], header["epoch"], adam, header.get("meta", {}))
