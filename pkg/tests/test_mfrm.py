import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bifas import kernels, ops
from bifas.bcn import LevelFeatures
from bifas.config import MfrmConfig
from bifas.gradcheck import gradcheck
from bifas.mfrm import channel_compress, content_encode, kernel_normalize, mfrm_forward, refine
from bifas.tensor import ShapeError, Tensor

from oracles import box_mean_zero_padded, conv2d_loops, refine_loops


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype=np.float64)


def level_params(prefix, c, c_comp, k, rng, enc_k=5, zero_encoder=False):
    enc_w = np.zeros((k * k, c_comp, enc_k, enc_k)) if zero_encoder else rng.normal(size=(k * k, c_comp, enc_k, enc_k)) * 0.1
    return {
        f"{prefix}.compress.w": T(rng.normal(size=(c_comp, c, 1, 1))),
        f"{prefix}.compress.b": T(rng.normal(size=c_comp)),
        f"{prefix}.encode.w": T(enc_w),
        f"{prefix}.encode.b": T(np.zeros(k * k) if zero_encoder else rng.normal(size=k * k)),
    }


# --- compressor / encoder / normaliser ---------------------------------------


def test_compress_identity():
    x = T(np.random.default_rng(0).normal(size=(1, 4, 3, 3)))
    p = {"m.compress.w": T(np.eye(4).reshape(4, 4, 1, 1)), "m.compress.b": T(np.zeros(4))}
    np.testing.assert_array_equal(channel_compress(x, p, "m").data, x.data)


def test_compress_zero_weights():
    x = T(np.random.default_rng(0).normal(size=(1, 4, 3, 3)))
    p = {"m.compress.w": T(np.zeros((2, 4, 1, 1))), "m.compress.b": T(np.zeros(2))}
    assert np.all(channel_compress(x, p, "m").data == 0)


def test_compress_matches_oracle():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(2, 6, 4, 4)), rng.normal(size=(3, 6, 1, 1)), rng.normal(size=3)
    out = channel_compress(T(x), {"m.compress.w": T(w), "m.compress.b": T(b)}, "m").data
    np.testing.assert_allclose(out, conv2d_loops(x, w, b), atol=1e-12)


def test_compress_rejects_expansion():
    p = {"m.compress.w": T(np.zeros((8, 4, 1, 1))), "m.compress.b": T(np.zeros(8))}
    with pytest.raises(ShapeError):
        channel_compress(T(np.zeros((1, 4, 2, 2))), p, "m")


def test_encode_zero_and_constant_bias():
    x = T(np.random.default_rng(0).normal(size=(1, 3, 4, 4)))
    p = {"m.encode.w": T(np.zeros((25, 3, 5, 5))), "m.encode.b": T(np.zeros(25))}
    assert np.all(content_encode(x, p, "m").data == 0)
    p["m.encode.b"] = T(np.full(25, 0.7))
    assert np.all(content_encode(x, p, "m").data == 0.7)


def test_encode_matches_oracle():
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(1, 3, 6, 6)), rng.normal(size=(9, 3, 5, 5)), rng.normal(size=9)
    out = content_encode(T(x), {"m.encode.w": T(w), "m.encode.b": T(b)}, "m").data
    np.testing.assert_allclose(out, conv2d_loops(x, w, b), atol=1e-12)


def test_normalize_equal_logits():
    out = kernel_normalize(T(np.zeros((1, 25, 3, 3)))).data
    np.testing.assert_allclose(out, 0.04, atol=1e-15)


def test_normalize_saturates():
    logits = np.zeros((1, 25, 2, 2))
    logits[:, 7] = 20.0
    assert np.all(kernel_normalize(T(logits)).data[:, 7] > 0.999)


def test_normalize_sums_to_one():
    out = kernel_normalize(Tensor(np.random.default_rng(0).normal(size=(2, 25, 4, 4)) * 3)).data
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert np.all((out > 0) & (out < 1))


# --- refine -----------------------------------------------------------------


def test_refine_uniform_is_box_mean():
    f = np.random.default_rng(0).normal(size=(1, 3, 6, 7))
    w = np.full((1, 25, 6, 7), 1 / 25)
    np.testing.assert_allclose(refine(T(f), T(w), 5).data, box_mean_zero_padded(f, 5), atol=1e-6)


def test_refine_k1_identity():
    f = np.random.default_rng(0).normal(size=(2, 3, 4, 4))
    np.testing.assert_array_equal(refine(T(f), T(np.ones((2, 1, 4, 4))), 1).data, f)


@pytest.mark.parametrize("seed", range(5))
def test_refine_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(1, 2, 6, 6))
    w = rng.random((1, 25, 6, 6))
    np.testing.assert_allclose(refine(T(f), T(w), 5).data, refine_loops(f, w, 5), atol=1e-6)


def test_refine_shift_with_one_hot_kernel():
    f = np.random.default_rng(3).normal(size=(1, 2, 7, 7))
    logits = np.full((1, 9, 7, 7), -40.0)
    logits[:, 0 * 3 + 2] = 40.0  # neighbour at (-1, +1)
    w = kernel_normalize(T(logits))
    out = refine(T(f), w, 3).data
    np.testing.assert_allclose(out[:, :, 1:, :-1], f[:, :, :-1, 1:], atol=1e-12)


def test_refine_rejects_misaligned():
    with pytest.raises(ShapeError):
        refine(T(np.zeros((1, 2, 4, 4))), T(np.zeros((1, 25, 4, 5))), 5)
    with pytest.raises(ShapeError):
        refine(T(np.zeros((1, 2, 4, 4))), T(np.zeros((1, 9, 4, 4))), 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_refine_convexity(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(1, 2, 5, 5))
    w = kernel_normalize(T(rng.normal(size=(1, 9, 5, 5)) * 2)).data
    out = refine(T(f), T(w), 3).data
    fp = np.pad(f, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for i in range(5):
        for j in range(5):
            win = fp[0, :, i:i + 3, j:j + 3].reshape(2, -1)
            assert np.all(out[0, :, i, j] >= win.min(axis=1) - 1e-12)
            assert np.all(out[0, :, i, j] <= win.max(axis=1) + 1e-12)


def test_refine_gradcheck_features_and_logits():
    rng = np.random.default_rng(4)
    f = T(rng.normal(size=(2, 3, 5, 5)))
    logits = T(rng.normal(size=(2, 9, 5, 5)))
    probe = rng.normal(size=(2, 3, 5, 5))
    err = gradcheck(lambda f_, l_: ops.sum(ops.mul(refine(f_, kernel_normalize(l_), 3), probe)), [f, logits])
    assert err < 1e-3


def test_refine_kernels_agree():
    rng = np.random.default_rng(8)
    f, w, g = rng.normal(size=(2, 3, 6, 5)), rng.random((2, 25, 6, 5)), rng.normal(size=(2, 3, 6, 5))
    np.testing.assert_allclose(kernels.numpy_impl.refine_forward(f, w, 5),
                               kernels.numba_impl.refine_forward(f, w, 5), atol=1e-12)
    for a, b in zip(kernels.numpy_impl.refine_backward(f, w, g, 5), kernels.numba_impl.refine_backward(f, w, g, 5)):
        np.testing.assert_allclose(a, b, atol=1e-12)


# --- full module ------------------------------------------------------------


def _levels(rng, c=(4, 6, 5), n=1, size=16):
    return LevelFeatures(*(T(rng.normal(size=(n, ch, size >> i, size >> i))) for i, ch in enumerate(c)))


def test_mfrm_fused_channels_and_size():
    rng = np.random.default_rng(0)
    cfg = MfrmConfig(compressed_channels=3, kernel_size=3)
    params = {}
    for name, c in zip(("low", "mid", "high"), (4, 6, 5)):
        params.update(level_params(f"mfrm.{name}", c, 3, 3, rng))
    out = mfrm_forward(_levels(rng), params, cfg)
    assert out.shape == (1, 15, 4, 4)


def test_mfrm_zero_encoder_gives_box_means():
    rng = np.random.default_rng(1)
    cfg = MfrmConfig(compressed_channels=2, kernel_size=5)
    levels = _levels(rng)
    params = {}
    for name, c in zip(("low", "mid", "high"), (4, 6, 5)):
        params.update(level_params(f"mfrm.{name}", c, 2, 5, rng, zero_encoder=True))
    out = mfrm_forward(levels, params, cfg).data
    expected = []
    for f, factor in ((levels.low, 4), (levels.mid, 2), (levels.high, 1)):
        box = box_mean_zero_padded(f.data, 5)
        n, c, h, w = box.shape
        expected.append(box.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5)))
    np.testing.assert_allclose(out, np.concatenate(expected, axis=1), atol=1e-6)


def test_mfrm_matches_manual_composition():
    rng = np.random.default_rng(2)
    cfg = MfrmConfig(compressed_channels=2, kernel_size=3)
    levels = _levels(rng)
    params = {}
    for name, c in zip(("low", "mid", "high"), (4, 6, 5)):
        params.update(level_params(f"mfrm.{name}", c, 2, 3, rng))
    out = mfrm_forward(levels, params, cfg).data
    parts = []
    for name, f, factor in (("low", levels.low, 4), ("mid", levels.mid, 2), ("high", levels.high, 1)):
        p = lambda k: params[f"mfrm.{name}.{k}"].data  # noqa: E731
        comp = conv2d_loops(f.data, p("compress.w"), p("compress.b"))
        logits = conv2d_loops(comp, p("encode.w"), p("encode.b"))
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        ref = refine_loops(f.data, e / e.sum(axis=1, keepdims=True), 3)
        n, c, h, w = ref.shape
        parts.append(ref.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5)))
    np.testing.assert_allclose(out, np.concatenate(parts, axis=1), atol=1e-9)
