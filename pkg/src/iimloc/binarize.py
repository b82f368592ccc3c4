"""Hard binarization with a learnable threshold, and the threshold encoders.

Forward is an exact comparison ``O = [I >= T]``. Backward relaxes it linearly:
the output mean falls with slope -1 in the threshold, so the threshold receives
the negated upstream gradient, while the confidence map receives the upstream
gradient unchanged (straight-through). The two paths therefore push in
opposite directions for the same loss.

Threshold encoders never propagate gradients into their inputs; features and
confidence are treated as constants (detached) inside this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numgrid as ng

LOW, HIGH = 0.2, 0.7
# nearest representable values strictly inside the band
_LOW_IN = np.nextafter(LOW, 1.0)
_HIGH_IN = np.nextafter(HIGH, 0.0)

PBM_POOL = 15
PBM_SCALE = 8


@dataclass
class BinarizeTape:
    conf: np.ndarray
    threshold: float | np.ndarray
    scalar: bool

    @property
    def shape(self):
        return self.conf.shape


def _as_map(conf) -> np.ndarray:
    conf = np.asarray(conf, dtype=ng.DTYPE)
    if conf.ndim != 2:
        raise ValueError(f"confidence map must be 2-D, got shape {conf.shape}")
    return conf


def binarize_forward(conf, threshold):
    """Return ``(O, tape)`` with ``O[i, j] = 1`` iff ``conf[i, j] >= threshold[i, j]``."""
    conf = _as_map(conf)
    scalar = np.ndim(threshold) == 0
    if scalar:
        threshold = float(threshold)
    else:
        threshold = np.asarray(threshold, dtype=ng.DTYPE)
        if threshold.shape != conf.shape:
            raise ValueError(
                f"threshold map shape {threshold.shape} != confidence shape {conf.shape}")
    out = (conf >= threshold).astype(ng.DTYPE)
    return out, BinarizeTape(conf, threshold, scalar)


def binarize_backward(tape: BinarizeTape, upstream):
    """Return ``(grad_conf, grad_threshold)``.

    ``grad_threshold`` is a float in scalar mode (``-sum(upstream)``) and a map
    (``-upstream``) in pixel mode.
    """
    upstream = np.asarray(upstream, dtype=ng.DTYPE)
    if upstream.shape != tape.shape:
        raise ValueError(f"upstream shape {upstream.shape} != binarized shape {tape.shape}")
    grad_conf = upstream.copy()
    if tape.scalar:
        return grad_conf, -float(upstream.sum())
    return grad_conf, -upstream


def compressed_sigmoid(x) -> np.ndarray:
    """``1 / (2 + exp(-x)) + 0.2``, kept strictly inside (0.2, 0.7)."""
    x = np.asarray(x, dtype=ng.DTYPE)
    # exp(-x) for x >= 0, rewritten through exp(x) for x < 0 to avoid overflow
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (2.0 + e), e / (2.0 * e + 1.0)) + LOW
    return np.clip(y, _LOW_IN, _HIGH_IN)


def compressed_sigmoid_backward(x, dy) -> np.ndarray:
    x = np.asarray(x, dtype=ng.DTYPE)
    e = np.exp(-np.abs(x))
    d = np.where(x >= 0, e / (2.0 + e) ** 2, e / (2.0 * e + 1.0) ** 2)
    return np.asarray(dy, dtype=ng.DTYPE) * d


# --- threshold encoders ------------------------------------------------------------

def _masked_input(features, conf) -> np.ndarray:
    feats = ng.as_stack(features)
    conf = _as_map(conf)
    if feats.shape[1:] != conf.shape:
        raise ValueError(
            f"features {feats.shape[1:]} and confidence {conf.shape} are not spatially aligned")
    # detached copies: nothing computed from these flows back to the backbone
    return feats * conf[None]


def init_ibm(rng: np.random.Generator, channels: int) -> dict[str, np.ndarray]:
    w, b = ng.init_conv(rng, channels, 1, 1, scale=0.1 / np.sqrt(channels))
    return {"te.ibm.w": w, "te.ibm.b": b}


def ibm_threshold(features, conf, params: dict[str, np.ndarray]):
    """Image-level threshold: 1x1 conv, global average pool, compressed sigmoid.

    Returns ``(threshold, cache)``; the threshold is a Python float.
    """
    x = _masked_input(features, conf)
    z = ng.conv2d(x, params["te.ibm.w"], params["te.ibm.b"])
    pooled = ng.gap(z)  # (1,)
    t = float(compressed_sigmoid(pooled)[0])
    return t, (x, z.shape, pooled)


def ibm_backward(cache, grad_threshold: float, params) -> dict[str, np.ndarray]:
    x, zshape, pooled = cache
    dpooled = compressed_sigmoid_backward(pooled, np.array([grad_threshold]))
    dz = ng.gap_backward(dpooled, zshape[1], zshape[2])
    _, dw, db = ng.conv2d_backward(x, params["te.ibm.w"], dz, need_input_grad=False)
    return {"te.ibm.w": dw, "te.ibm.b": db}


def init_pbm(rng: np.random.Generator, channels: int, hidden: int = 16) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    c_in = channels
    for i in range(3):
        w, b = ng.init_conv(rng, c_in, hidden, 3)
        params[f"te.pbm.conv{i}.w"] = w
        params[f"te.pbm.conv{i}.b"] = b
        params[f"te.pbm.prelu{i}"] = np.array(0.25)
        c_in = hidden
    w, b = ng.init_conv(rng, hidden, 1, 1, scale=0.1 / np.sqrt(hidden))
    params["te.pbm.head.w"] = w
    params["te.pbm.head.b"] = b  # zero bias: initial map sits near f(0) = 0.533
    return params


def pbm_low_res(height: int, width: int) -> tuple[int, int]:
    return max(1, round(height / PBM_SCALE)), max(1, round(width / PBM_SCALE))


def pbm_threshold(features, conf, params: dict[str, np.ndarray]):
    """Pixel-level threshold map at full resolution. Returns ``(map, cache)``.

    Runs at 1/8 resolution: three 3x3 conv + PReLU, 15x15 box pool, 1x1 conv,
    15x15 box pool, compressed sigmoid, then bilinear upsampling.
    """
    x = _masked_input(features, conf)
    h, w = x.shape[1:]
    lh, lw = pbm_low_res(h, w)
    a = ng.resize_bilinear(x, lh, lw)
    acts = [a]
    pre = []
    for i in range(3):
        z = ng.conv2d(a, params[f"te.pbm.conv{i}.w"], params[f"te.pbm.conv{i}.b"], padding=1)
        pre.append(z)
        a = ng.prelu(z, float(params[f"te.pbm.prelu{i}"]))
        acts.append(a)
    p1 = ng.avgpool_box(a, PBM_POOL)
    z_head = ng.conv2d(p1, params["te.pbm.head.w"], params["te.pbm.head.b"])
    p2 = ng.avgpool_box(z_head, PBM_POOL)
    t_low = compressed_sigmoid(p2)
    t_full = ng.resize_bilinear(t_low, h, w)[0]
    # interpolation of in-band values stays in band; clip guards the last ulp
    t_full = np.clip(t_full, _LOW_IN, _HIGH_IN)
    cache = (acts, pre, p1, p2, (h, w), (lh, lw))
    return t_full, cache


def pbm_backward(cache, grad_map, params) -> dict[str, np.ndarray]:
    acts, pre, p1, p2, (h, w), (lh, lw) = cache
    grads: dict[str, np.ndarray] = {}
    d_low = ng.resize_bilinear_backward(np.asarray(grad_map)[None], lh, lw)
    d_p2 = compressed_sigmoid_backward(p2, d_low)
    d_zhead = ng.avgpool_box_backward(d_p2, PBM_POOL)
    d_p1, grads["te.pbm.head.w"], grads["te.pbm.head.b"] = ng.conv2d_backward(
        p1, params["te.pbm.head.w"], d_zhead)
    da = ng.avgpool_box_backward(d_p1, PBM_POOL)
    for i in reversed(range(3)):
        dz, dslope = ng.prelu_backward(pre[i], float(params[f"te.pbm.prelu{i}"]), da)
        grads[f"te.pbm.prelu{i}"] = np.array(dslope)
        da, grads[f"te.pbm.conv{i}.w"], grads[f"te.pbm.conv{i}.b"] = ng.conv2d_backward(
            acts[i], params[f"te.pbm.conv{i}.w"], dz, padding=1, need_input_grad=i > 0)
    return grads


def bm_apply(conf, features, mode: str, params: dict[str, np.ndarray]):
    """Threshold encoder followed by binarization.

    Returns ``(O, tape, te_cache)``; pass ``te_cache`` to :func:`bm_backward`.
    """
    if mode == "ibm":
        thr, cache = ibm_threshold(features, conf, params)
    elif mode == "pbm":
        thr, cache = pbm_threshold(features, conf, params)
    else:
        raise ValueError(f"unknown binarization module {mode!r}; expected 'ibm' or 'pbm'")
    out, tape = binarize_forward(conf, thr)
    return out, tape, (mode, cache)


def bm_backward(tape: BinarizeTape, te_cache, upstream, params):
    """Return ``(grad_conf, te_param_grads)`` for an upstream gradient on O."""
    grad_conf, grad_thr = binarize_backward(tape, upstream)
    mode, cache = te_cache
    if mode == "ibm":
        return grad_conf, ibm_backward(cache, grad_thr, params)
    return grad_conf, pbm_backward(cache, grad_thr, params)
