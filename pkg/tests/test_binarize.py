import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from iimloc import binarize as bz
from iimloc import numgrid as ng
from fd import numeric_grad, rel_err

F0 = 1.0 / 3.0 + 0.2  # compressed sigmoid at zero


def test_forward_examples():
    out, _ = bz.binarize_forward(np.array([[0.6, 0.4]]), 0.5)
    np.testing.assert_array_equal(out, [[1, 0]])
    out, _ = bz.binarize_forward(np.array([[0.5]]), 0.5)
    assert out[0, 0] == 1
    out, _ = bz.binarize_forward(np.array([[0.3, 0.6, 0.9]]), np.array([[0.2, 0.7, 0.7]]))
    np.testing.assert_array_equal(out, [[1, 0, 1]])


def test_forward_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        bz.binarize_forward(np.zeros((3, 3)), np.zeros((3, 4)))


def test_backward_scalar_over_cover():
    conf = np.full((4, 5), 0.9)
    _, tape = bz.binarize_forward(conf, 0.5)
    g_conf, g_t = bz.binarize_backward(tape, np.full((4, 5), 1 / 20))
    assert g_t == pytest.approx(-1.0)
    np.testing.assert_allclose(g_conf, 1 / 20)


def test_backward_zero_and_pixel_mode():
    _, tape = bz.binarize_forward(np.zeros((2, 2)), np.full((2, 2), 0.5))
    g_conf, g_t = bz.binarize_backward(tape, np.zeros((2, 2)))
    assert not g_conf.any() and not g_t.any()
    _, tape = bz.binarize_forward(np.array([[0.1, 0.9]]), np.array([[0.5, 0.5]]))
    g_conf, g_t = bz.binarize_backward(tape, np.array([[0.5, -0.25]]))
    np.testing.assert_array_equal(g_t, [[-0.5, 0.25]])
    np.testing.assert_array_equal(g_conf, [[0.5, -0.25]])
    with pytest.raises(ValueError, match="upstream"):
        bz.binarize_backward(tape, np.zeros((2, 2)))


def test_scalar_update_raises_threshold_when_over_covering():
    # one descent step at rate alpha on an over-covering output pushes T up
    conf = np.random.default_rng(0).uniform(size=(16, 16))
    target = np.zeros_like(conf)
    t, alpha = 0.4, 0.05
    out, tape = bz.binarize_forward(conf, t)
    _, d_out = ng.l1_loss(out, target)
    _, g_t = bz.binarize_backward(tape, d_out)
    t_new = t - alpha * g_t
    assert t_new > t
    assert bz.binarize_forward(conf, t_new)[0].mean() <= out.mean()


def test_compressed_sigmoid_values():
    assert bz.compressed_sigmoid(0.0) == pytest.approx(F0, abs=1e-15)
    assert abs(bz.compressed_sigmoid(40.0) - 0.7) < 1e-12
    assert abs(bz.compressed_sigmoid(-40.0) - 0.2) < 1e-12
    x = np.random.default_rng(1).normal(scale=4, size=(30,))
    fd = numeric_grad(lambda v: np.sum(bz.compressed_sigmoid(v)), x)
    assert rel_err(bz.compressed_sigmoid_backward(x, np.ones_like(x)), fd) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_compressed_sigmoid_band(x):
    y = float(bz.compressed_sigmoid(x))
    assert 0.2 < y < 0.7


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30, allow_nan=False))
def test_compressed_sigmoid_derivative_positive(x):
    assert bz.compressed_sigmoid_backward(x, 1.0) > 0


unit = st.floats(0, 1, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 5), elements=unit), arrays(np.float64, (4, 5), elements=st.floats(0.01, 1)),
       arrays(np.float64, (4, 5), elements=st.floats(0.01, 1)))
def test_idempotent_under_rebinarization(conf, thr, thr2):
    out, _ = bz.binarize_forward(conf, thr)
    again, _ = bz.binarize_forward(out, thr2)
    np.testing.assert_array_equal(again, out)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 6), elements=unit), arrays(np.float64, (3, 6), elements=unit),
       arrays(np.float64, (3, 6), elements=st.floats(0, 0.5)))
def test_monotone_in_threshold_and_confidence(conf, thr, bump):
    base, _ = bz.binarize_forward(conf, thr)
    assert np.all(bz.binarize_forward(conf, thr + bump)[0] <= base)
    assert np.all(bz.binarize_forward(conf + bump, thr)[0] >= base)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-3, 3, allow_nan=False)))
def test_antagonistic_gradients(upstream):
    conf = np.random.default_rng(2).uniform(size=(5, 5))
    _, tape = bz.binarize_forward(conf, np.full((5, 5), 0.5))
    g_conf, g_t = bz.binarize_backward(tape, upstream)
    np.testing.assert_array_equal(g_t, -g_conf)
    np.testing.assert_array_equal(g_conf, upstream)


@pytest.mark.parametrize("t", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_relaxation_mean_tracks_one_minus_t(t):
    conf = np.random.default_rng(int(t * 10)).uniform(size=(512, 512))
    y = bz.binarize_forward(conf, t)[0].mean()
    se = np.sqrt(t * (1 - t) / conf.size)
    assert abs(y - (1 - t)) < 3 * se


# --- threshold encoders -------------------------------------------------------------

def _pbm_params(channels=3, seed=0):
    return bz.init_pbm(np.random.default_rng(seed), channels, hidden=4)


def test_ibm_zero_features_gives_f0():
    params = bz.init_ibm(np.random.default_rng(0), 4)
    t, _ = bz.ibm_threshold(np.zeros((4, 8, 8)), np.ones((8, 8)), params)
    assert t == pytest.approx(F0, abs=1e-15)


def test_pbm_zero_features_uniform_f0():
    thr, _ = bz.pbm_threshold(np.zeros((3, 32, 40)), np.ones((32, 40)), _pbm_params())
    assert thr.shape == (32, 40)
    np.testing.assert_allclose(thr, F0, atol=1e-15)


def test_encoders_reject_misaligned_inputs():
    with pytest.raises(ValueError, match="aligned"):
        bz.pbm_threshold(np.zeros((3, 16, 16)), np.zeros((16, 17)), _pbm_params())
    with pytest.raises(ValueError, match="aligned"):
        bz.ibm_threshold(np.zeros((3, 16, 16)), np.zeros((8, 16)),
                         bz.init_ibm(np.random.default_rng(0), 3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 100))
def test_encoder_outputs_in_band(seed, scale):
    rng = np.random.default_rng(seed)
    feats = rng.normal(scale=scale, size=(3, 24, 24))
    conf = rng.uniform(size=(24, 24))
    thr, _ = bz.pbm_threshold(feats, conf, _pbm_params(seed=seed % 7))
    assert thr.min() > 0.2 and thr.max() < 0.7
    t, _ = bz.ibm_threshold(feats, conf, bz.init_ibm(rng, 3))
    assert 0.2 < t < 0.7


def _param_fd_check(forward, backward, params, r):
    grads = backward(r)
    for name, value in params.items():
        def f(v, name=name):
            saved = params[name]
            params[name] = v
            out = forward()
            params[name] = saved
            return float(np.sum(r * out))
        fd = numeric_grad(f, value)
        assert rel_err(grads[name], fd) < 1e-4, name


def test_ibm_param_gradients():
    rng = np.random.default_rng(3)
    feats, conf = rng.normal(size=(3, 12, 10)), rng.uniform(size=(12, 10))
    params = bz.init_ibm(rng, 3)
    params["te.ibm.w"] = rng.normal(size=params["te.ibm.w"].shape)
    params["te.ibm.b"] = rng.normal(size=1)
    r = 0.7

    def backward(r):
        _, cache = bz.ibm_threshold(feats, conf, params)
        return bz.ibm_backward(cache, r, params)

    _param_fd_check(lambda: bz.ibm_threshold(feats, conf, params)[0], backward, params, r)


def test_pbm_param_gradients():
    rng = np.random.default_rng(4)
    feats, conf = rng.normal(size=(3, 24, 32)), rng.uniform(size=(24, 32))
    params = _pbm_params()
    params["te.pbm.head.b"] = np.array([0.3])
    r = rng.normal(size=(24, 32))

    def backward(r):
        _, cache = bz.pbm_threshold(feats, conf, params)
        return bz.pbm_backward(cache, r, params)

    _param_fd_check(lambda: bz.pbm_threshold(feats, conf, params)[0], backward, params, r)


def test_bm_apply_extremes_and_composition():
    rng = np.random.default_rng(5)
    feats = rng.normal(size=(3, 16, 16))
    params = _pbm_params()
    out, _, _ = bz.bm_apply(np.ones((16, 16)), feats, "pbm", params)
    assert out.all()
    out, _, _ = bz.bm_apply(np.zeros((16, 16)), feats, "pbm", params)
    assert not out.any()
    conf = rng.uniform(size=(16, 16))
    out, _, _ = bz.bm_apply(conf, feats, "pbm", params)
    thr, _ = bz.pbm_threshold(feats, conf, params)
    np.testing.assert_array_equal(out, bz.binarize_forward(conf, thr)[0])
    with pytest.raises(ValueError, match="unknown"):
        bz.bm_apply(conf, feats, "xbm", params)


def test_bm_backward_reaches_only_encoder_params():
    rng = np.random.default_rng(6)
    feats, conf = rng.normal(size=(3, 16, 16)), rng.uniform(size=(16, 16))
    params = _pbm_params()
    up = rng.normal(size=(16, 16))
    out, tape, cache = bz.bm_apply(conf, feats, "pbm", params)
    g_conf, grads = bz.bm_backward(tape, cache, up, params)
    np.testing.assert_array_equal(g_conf, up)
    assert set(grads) == {k for k in params}
    assert all(k.startswith("te.") for k in grads)
