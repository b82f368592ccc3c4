"""Small differentiable-layer kernel over float64 ``(C, H, W)`` arrays.

Every layer is a pair of plain functions: a forward that returns the output
and a ``*_backward`` that takes the forward inputs plus the upstream gradient
and returns gradients for every input. There is no autograd graph; callers
keep whatever they need for the backward themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


def as_stack(x) -> np.ndarray:
    """Coerce a 2-D grid or 3-D stack to a float64 ``(C, H, W)`` array."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W) array, got shape {x.shape}")
    return x


def init_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int,
              scale: float | None = None):
    """He-normal kernel and zero bias for a ``k x k`` convolution."""
    if scale is None:
        scale = np.sqrt(2.0 / (c_in * k * k))
    weight = rng.normal(0.0, scale, size=(c_out, c_in, k, k)).astype(DTYPE)
    return weight, np.zeros(c_out, dtype=DTYPE)


# --- convolution -------------------------------------------------------------

def _check_conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, padding: int):
    if weight.ndim != 4:
        raise ValueError(f"conv2d: weight must be (out, in, kh, kw), got {weight.shape}")
    if x.shape[0] != weight.shape[1]:
        raise ValueError(
            f"conv2d: input has {x.shape[0]} channels but kernel expects {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {weight.shape[0]} outputs")
    kh, kw = weight.shape[2:]
    if x.shape[1] + 2 * padding < kh or x.shape[2] + 2 * padding < kw:
        raise ValueError(
            f"conv2d: {kh}x{kw} kernel does not fit {x.shape[1]}x{x.shape[2]} input "
            f"with padding {padding}")


def _flat_padded(x: np.ndarray, padding: int, kw: int):
    """Zero-pad, flatten rows, and append ``kw - 1`` zeros for the last shifts."""
    c, h, w = x.shape
    hp, wp = h + 2 * padding, w + 2 * padding
    flat = np.zeros((c, hp * wp + kw - 1), dtype=DTYPE)
    flat[:, :hp * wp].reshape(c, hp, wp)[:, padding:padding + h, padding:padding + w] = x
    return flat, hp, wp


# Convolution runs as a single GEMM of all kernel taps against the
# row-flattened padded input, followed by shifted adds. Output is computed on
# the padded width and cropped; no im2col matrix is built.

def _taps(kh: int, kw: int, wp: int):
    return [(i, j, i * wp + j) for i in range(kh) for j in range(kw)]


def conv2d(x, weight: np.ndarray, bias: np.ndarray, padding: int = 0) -> np.ndarray:
    """Stride-1 cross-correlation with zero padding."""
    x = as_stack(x)
    _check_conv(x, weight, bias, padding)
    n_out, n_in, kh, kw = weight.shape
    flat, hp, wp = _flat_padded(x, padding, kw)
    ho, wo = hp - kh + 1, wp - kw + 1
    span = ho * wp
    # rows grouped by tap: (kh*kw*n_out, n_in)
    stacked = weight.transpose(2, 3, 0, 1).reshape(kh * kw * n_out, n_in)
    z = stacked @ flat
    y = np.zeros((n_out, span), dtype=DTYPE)
    for t, (_, _, off) in enumerate(_taps(kh, kw, wp)):
        y += z[t * n_out:(t + 1) * n_out, off:off + span]
    y = y.reshape(n_out, ho, wp)[:, :, :wo]
    return y + bias[:, None, None]


def conv2d_backward(x, weight: np.ndarray, dy: np.ndarray, padding: int = 0,
                    need_input_grad: bool = True):
    """Return ``(dx, dweight, dbias)`` for :func:`conv2d`.

    ``dx`` is ``None`` when ``need_input_grad`` is false, which skips the
    transposed pass for first layers.
    """
    x = as_stack(x)
    n_out, n_in, kh, kw = weight.shape
    flat, hp, wp = _flat_padded(x, padding, kw)
    ho, wo = hp - kh + 1, wp - kw + 1
    if dy.shape != (n_out, ho, wo):
        raise ValueError(
            f"conv2d_backward: upstream shape {dy.shape} does not match output {(n_out, ho, wo)}")
    span = ho * wp
    dy_ext = np.zeros((n_out, ho, wp), dtype=DTYPE)
    dy_ext[:, :, :wo] = dy
    dy_ext = dy_ext.reshape(n_out, span)
    taps = _taps(kh, kw, wp)
    dw = np.empty(weight.shape, dtype=DTYPE)
    for i, j, off in taps:
        dw[:, :, i, j] = dy_ext @ flat[:, off:off + span].T
    db = dy.sum(axis=(1, 2))
    dx = None
    if need_input_grad:
        stacked_t = weight.transpose(2, 3, 1, 0).reshape(kh * kw * n_in, n_out)
        z = stacked_t @ dy_ext
        dflat = np.zeros_like(flat)
        for t, (_, _, off) in enumerate(taps):
            dflat[:, off:off + span] += z[t * n_in:(t + 1) * n_in]
        h, w = x.shape[1:]
        dx = dflat[:, :hp * wp].reshape(n_in, hp, wp)[:, padding:padding + h, padding:padding + w].copy()
    return dx, dw, db


# --- activations ---------------------------------------------------------------

def prelu(x, slope: float) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    return np.where(x >= 0, x, slope * x)


def prelu_backward(x, slope: float, dy: np.ndarray):
    """Return ``(dx, dslope)``."""
    x = np.asarray(x, dtype=DTYPE)
    neg_part = np.minimum(x, 0.0)
    dx = np.where(x < 0, slope * dy, dy)
    dslope = float(np.vdot(dy, neg_part))
    return dx, dslope


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Gradient through a sigmoid given its *output* ``y``."""
    return dy * y * (1.0 - y)


# --- pooling and resampling ------------------------------------------------------

def _box_sum(x: np.ndarray, k: int) -> np.ndarray:
    """Valid k x k window sums via separable running sums."""
    c = np.cumsum(x, axis=1)
    rows = np.concatenate([c[:, k - 1:k], c[:, k:] - c[:, :-k]], axis=1)
    c = np.cumsum(rows, axis=2)
    return np.concatenate([c[:, :, k - 1:k], c[:, :, k:] - c[:, :, :-k]], axis=2)


def avgpool_box(x, kernel: int) -> np.ndarray:
    """k x k mean filter, stride 1, replicate-edge padding (output keeps size)."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"avgpool_box: kernel must be a positive odd size, got {kernel}")
    x = as_stack(x)
    r = kernel // 2
    xp = np.pad(x, ((0, 0), (r, r), (r, r)), mode="edge")
    return _box_sum(xp, kernel) / (kernel * kernel)


def avgpool_box_backward(dy: np.ndarray, kernel: int) -> np.ndarray:
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"avgpool_box: kernel must be a positive odd size, got {kernel}")
    dy = as_stack(dy)
    r = kernel // 2
    # spread uniformly onto the padded input, then fold the replicated border back
    dyp = np.pad(dy, ((0, 0), (kernel - 1, kernel - 1), (kernel - 1, kernel - 1)))
    dxp = _box_sum(dyp, kernel) / (kernel * kernel)  # (C, H+2r, W+2r)
    h, w = dy.shape[1:]
    dxp[:, r, :] += dxp[:, :r, :].sum(axis=1)
    dxp[:, r + h - 1, :] += dxp[:, r + h:, :].sum(axis=1)
    dxp[:, :, r] += dxp[:, :, :r].sum(axis=2)
    dxp[:, :, r + w - 1] += dxp[:, :, r + w:].sum(axis=2)
    return dxp[:, r:r + h, r:r + w]


def _lerp_index(n_in: int, n_out: int):
    # align_corners=False source coordinates, clamped at the borders
    src = (np.arange(n_out, dtype=DTYPE) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(x, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with the half-pixel (align-corners-false) convention."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize_bilinear: output size must be positive, got {out_h}x{out_w}")
    x = as_stack(x)
    y0, y1, fy = _lerp_index(x.shape[1], out_h)
    x0, x1, fx = _lerp_index(x.shape[2], out_w)
    top, bot = x[:, y0, :], x[:, y1, :]
    rows = top + fy[None, :, None] * (bot - top)
    left, right = rows[:, :, x0], rows[:, :, x1]
    return left + fx[None, None, :] * (right - left)


def _lerp_matrix(n_in: int, n_out: int) -> np.ndarray:
    i0, i1, f = _lerp_index(n_in, n_out)
    m = np.zeros((n_out, n_in), dtype=DTYPE)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    return m


def resize_bilinear_backward(dy: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    dy = as_stack(dy)
    ry = _lerp_matrix(in_h, dy.shape[1])
    rx = _lerp_matrix(in_w, dy.shape[2])
    return np.einsum("oh,coq,qw->chw", ry, dy, rx, optimize=True)


def gap(x) -> np.ndarray:
    """Global average pooling: one mean per channel."""
    x = as_stack(x)
    return x.sum(axis=(1, 2)) / (x.shape[1] * x.shape[2])


def gap_backward(dy, height: int, width: int) -> np.ndarray:
    dy = np.asarray(dy, dtype=DTYPE).reshape(-1)
    return np.broadcast_to(dy[:, None, None] / (height * width), (dy.size, height, width)).copy()


# --- losses ----------------------------------------------------------------------

def _check_pair(name: str, pred: np.ndarray, target: np.ndarray):
    if pred.shape != target.shape:
        raise ValueError(f"{name}: prediction shape {pred.shape} != target shape {target.shape}")


def mse_loss(pred, target):
    """Mean squared error. Returns ``(loss, dloss/dpred)``."""
    pred = np.asarray(pred, dtype=DTYPE)
    target = np.asarray(target, dtype=DTYPE)
    _check_pair("mse_loss", pred, target)
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def l1_loss(pred, target):
    """Mean absolute error with subgradient 0 at ties. Returns ``(loss, grad)``."""
    pred = np.asarray(pred, dtype=DTYPE)
    target = np.asarray(target, dtype=DTYPE)
    _check_pair("l1_loss", pred, target)
    diff = pred - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


# --- optimizer -------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    lr_confidence: float = 1e-3  # gamma, confidence predictor group
    lr_threshold: float = 1e-4  # beta, threshold encoder group
    lr_layer: float = 1e-2  # alpha, bare learnable scalar threshold
    decay: float = 0.99  # per epoch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        for name in ("lr_confidence", "lr_threshold", "lr_layer"):
            if not getattr(self, name) > 0:
                raise ValueError(f"OptimizerConfig.{name} must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("OptimizerConfig.decay must lie in (0, 1]")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place.

    ``lr`` is a float or a mapping from parameter name to its group rate.
    Parameters without a gradient entry are left alone.
    """
    for name, g in grads.items():
        g = np.asarray(g, dtype=DTYPE)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"adam_step: non-finite gradient for parameter {name!r}")
        if g.shape != np.shape(params[name]):
            raise ValueError(
                f"adam_step: gradient shape {g.shape} for {name!r} does not match "
                f"parameter shape {np.shape(params[name])}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        g = np.asarray(g, dtype=DTYPE)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        rate = lr[name] if isinstance(lr, dict) else lr
        update = rate * (m / c1) / (np.sqrt(v / c2) + eps)
        params[name] -= update
